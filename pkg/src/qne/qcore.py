"""Dense complex linear algebra and density-operator primitives.

Matrices are plain ``numpy`` complex arrays. Composite systems use the
big-endian tensor convention: for a purification on ``R ⊗ S`` the reference
system ``R`` is the leading factor, so amplitude ``r * d_S + s`` belongs to
reference index ``r`` and system index ``s``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from qne import constants
from qne.errors import (
    InvalidDimensionError,
    InvalidStateError,
    NotHermitianError,
    NumericalFailureError,
    SingularOperandError,
)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def num_qubits_for(dim: int) -> int:
    if not _is_power_of_two(dim):
        raise InvalidDimensionError(f"dimension {dim} is not a power of two")
    return dim.bit_length() - 1


def hermiticity_error(m: np.ndarray) -> float:
    """Largest entry-wise deviation ``|m[i, j] - conj(m[j, i])|``."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - m.conj().T)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or not _is_power_of_two(amps.shape[0]):
            raise InvalidDimensionError(
                f"pure state needs a power-of-two length vector, got shape {amps.shape}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > constants.NORM_TOL:
            raise InvalidStateError(f"state norm squared is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density_matrix(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A d×d Hermitian, positive semidefinite, unit-trace matrix.

    The constructor validates every invariant and stores a read-only copy.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"density operator must be square, got shape {m.shape}")
        num_qubits_for(m.shape[0])
        herm = hermiticity_error(m)
        if herm > constants.HERMITIAN_TOL:
            raise NotHermitianError(f"hermiticity error {herm:.3e} exceeds tolerance")
        tr = np.trace(m)
        if abs(tr - 1.0) > constants.TRACE_TOL:
            raise InvalidStateError(f"trace is {tr!r}, expected 1")
        lam_min = float(np.linalg.eigvalsh(m)[0])
        if lam_min < -constants.MIN_EIGENVALUE_TOL:
            raise InvalidStateError(f"minimum eigenvalue {lam_min:.3e} is negative")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        return num_qubits_for(self.dim)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def diagonal(cls, probs) -> "DensityOperator":
        return cls(np.diag(np.asarray(probs, dtype=complex)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityOperator":
        try:
            dim = int(data["dim"])
            re = np.asarray(data["re"], dtype=float)
            im = np.asarray(data["im"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidStateError(f"malformed density-operator record: {exc}") from exc
        if re.shape != (dim, dim) or im.shape != (dim, dim):
            raise InvalidDimensionError(
                f"declared dim {dim} does not match arrays {re.shape} / {im.shape}"
            )
        return cls(re + 1j * im)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "DensityOperator":
        return cls.from_dict(json.loads(Path(path).read_text()))


def random_pure_state(dim: int, rng: np.random.Generator) -> PureState:
    """Haar-random pure state from a normalized complex Gaussian vector."""
    if dim < 1:
        raise InvalidDimensionError(f"dim must be at least 1, got {dim}")
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState(v / np.linalg.norm(v))


def partial_trace_reference(state: PureState, system_dim: int) -> DensityOperator:
    """Trace out the leading reference factor of a purification.

    The reference system must have the same dimension as the system, so
    ``state.dim == system_dim ** 2``.
    """
    if system_dim < 1 or system_dim * system_dim != state.dim:
        raise InvalidDimensionError(
            f"state of dim {state.dim} is not a purification of a {system_dim}-dim system"
        )
    psi = state.amplitudes.reshape(system_dim, system_dim)  # [reference, system]
    rho = psi.T @ psi.conj()
    # Exact Hermitian symmetrization; removes rounding-level asymmetry only.
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return DensityOperator(rho)


def random_mixed_state(num_qubits: int, rng: np.random.Generator) -> DensityOperator:
    """Mixed state obtained from a Haar-random purification with a same-size reference."""
    d = 2**num_qubits
    return partial_trace_reference(random_pure_state(d * d, rng), d)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def _check_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    err = hermiticity_error(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if err > constants.HERMITIAN_TOL * scale:
        raise NotHermitianError(f"hermiticity error {err:.3e} exceeds tolerance")
    return m


def _jacobi_eigh(m: np.ndarray, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a complex Hermitian matrix."""
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(float(np.linalg.norm(a)), 1e-300)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diagonal(a))))
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = 0.5 * np.arctan2(2.0 * mag, (a[p, p] - a[q, q]).real)
                c, s = np.cos(theta), np.sin(theta)
                # Columns p, q of J = diag(1, conj(phase)) @ [[c, -s], [s, c]].
                jp = np.array([c, s * np.conj(phase)])
                jq = np.array([-s, c * np.conj(phase)])
                cols = a[:, [p, q]]
                a[:, p] = cols @ jp
                a[:, q] = cols @ jq
                rows = a[[p, q], :]
                a[p, :] = jp.conj() @ rows
                a[q, :] = jq.conj() @ rows
                a[p, q] = a[q, p] = 0.0
                vcols = v[:, [p, q]]
                v[:, p] = vcols @ jp
                v[:, q] = vcols @ jq
    else:
        raise NumericalFailureError("Jacobi iteration did not converge")
    lam = np.diagonal(a).real.copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def eig_hermitian(m: np.ndarray, method: str = "lapack"):
    """Eigendecomposition of a Hermitian matrix.

    Args:
        m: square complex matrix, Hermitian within tolerance.
        method: ``"lapack"`` (``numpy.linalg.eigh``) or ``"jacobi"``
            (cyclic complex Jacobi rotations, pure numpy).

    Returns:
        ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and the
        eigenvectors stored as columns, so ``m = V diag(λ) V†``.
    """
    m = _check_hermitian(m)
    m = 0.5 * (m + m.conj().T)
    if method == "lapack":
        lam, vecs = np.linalg.eigh(m)
    elif method == "jacobi":
        lam, vecs = _jacobi_eigh(m)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return lam, vecs


def matrix_function(
    m: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    require_positive: bool = False,
) -> np.ndarray:
    """Apply a real scalar function to a Hermitian matrix spectrally.

    Set ``require_positive`` for functions such as ``log`` or negative powers
    that need a nonsingular positive operand.
    """
    lam, vecs = eig_hermitian(m)
    if require_positive and lam[0] <= constants.SINGULAR_TOL:
        raise SingularOperandError(f"minimum eigenvalue {lam[0]:.3e} is not strictly positive")
    out = (vecs * f(lam)) @ vecs.conj().T
    return 0.5 * (out + out.conj().T)


def matrix_exp(m: np.ndarray) -> np.ndarray:
    return matrix_function(m, np.exp)


def matrix_log(m: np.ndarray) -> np.ndarray:
    return matrix_function(m, np.log, require_positive=True)


def matrix_power(m: np.ndarray, power: float) -> np.ndarray:
    """Real power of a PSD Hermitian matrix; negative powers need it nonsingular."""
    if power < 0:
        return matrix_function(m, lambda x: x**power, require_positive=True)
    return matrix_function(m, lambda x: np.clip(x, 0.0, None) ** power)


def trace_product(a: np.ndarray, b: np.ndarray, real: bool = False):
    """``Tr[a b]`` without forming the product.

    With ``real=True`` the imaginary part must be negligible and a float is
    returned; use this for Hermitian times PSD pairs.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape[::-1] or a.shape != b.shape:
        raise InvalidDimensionError(f"cannot trace product of shapes {a.shape} and {b.shape}")
    val = complex(np.sum(a * b.T))
    if not real:
        return val
    if abs(val.imag) > constants.IMAG_TOL:
        raise NumericalFailureError(f"trace has imaginary part {val.imag:.3e}")
    return val.real
