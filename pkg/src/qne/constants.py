"""Numerical tolerances shared across the package."""

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
NORM_TOL = 1e-10
MIN_EIGENVALUE_TOL = 1e-10
DECOMPOSITION_TOL = 1e-9
UNITARY_TOL = 1e-10

# Inputs to ln and negative powers must have every eigenvalue above this.
SINGULAR_TOL = 1e-12
# Eigenvalues at or below this are dropped from entropy sums (0 ln 0 := 0).
ENTROPY_CLAMP = 1e-14
# Imaginary residue tolerated when a trace is reported as a real number.
IMAG_TOL = 1e-9

# Probability vectors: entries above -CLAMP_TOL are clipped to zero, and a
# total drifting further than NORMALIZATION_TOL from one is an error.
PROB_CLAMP_TOL = 1e-12
NORMALIZATION_TOL = 1e-9

MAX_QUBITS = 12
