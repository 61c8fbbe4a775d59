"""Closed-form ground truths for entropies, divergences and fidelity.

All values are in nats. These routines work on the full density matrices and
share no code path with the variational estimators beyond the eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qne import constants
from qne.errors import InvalidDimensionError, SingularOperandError
from qne.qcore import DensityOperator, eig_hermitian, haar_unitary, matrix_log, matrix_power, trace_product


@dataclass(frozen=True)
class GroundTruth:
    quantity: str
    value: float
    method: str  # "closed-form" | "commuting-reduction" | "classical-formula"


def _spectrum(rho: DensityOperator) -> np.ndarray:
    return eig_hermitian(rho.matrix)[0]


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > 0 or alpha == 1.0:
        raise ValueError(f"alpha must lie in (0, 1) or (1, inf), got {alpha}")
    return alpha


def von_neumann(rho: DensityOperator) -> float:
    lam = _spectrum(rho)
    lam = lam[lam > constants.ENTROPY_CLAMP]
    return float(-np.sum(lam * np.log(lam)))


def renyi_entropy(rho: DensityOperator, alpha: float) -> float:
    alpha = _check_alpha(alpha)
    lam = _spectrum(rho)
    lam = lam[lam > constants.ENTROPY_CLAMP]
    return float(np.log(np.sum(lam**alpha)) / (1.0 - alpha))


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Uhlmann fidelity ``||sqrt(rho) sqrt(sigma)||_1 ** 2``."""
    if rho.dim != sigma.dim:
        raise InvalidDimensionError("states have different dimensions")
    prod = matrix_power(rho.matrix, 0.5) @ matrix_power(sigma.matrix, 0.5)
    nuclear = float(np.sum(np.linalg.svd(prod, compute_uv=False)))
    return min(nuclear**2, 1.0)


def root_fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    return float(np.sqrt(fidelity(rho, sigma)))


def quantum_rel_ent(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Umegaki relative entropy ``Tr[rho (ln rho - ln sigma)]``; sigma must be full rank."""
    if rho.dim != sigma.dim:
        raise InvalidDimensionError("states have different dimensions")
    cross = trace_product(rho.matrix, matrix_log(sigma.matrix), real=True)
    return float(-von_neumann(rho) - cross)


def sandwiched_renyi(rho: DensityOperator, sigma: DensityOperator, alpha: float) -> float:
    alpha = _check_alpha(alpha)
    if rho.dim != sigma.dim:
        raise InvalidDimensionError("states have different dimensions")
    if _spectrum(sigma)[0] <= constants.SINGULAR_TOL:
        raise SingularOperandError("sandwiched Renyi divergence needs a positive definite sigma")
    s = matrix_power(sigma.matrix, (1.0 - alpha) / (2.0 * alpha))
    inner = s @ rho.matrix @ s
    inner = 0.5 * (inner + inner.conj().T)
    lam = np.clip(eig_hermitian(inner)[0], 0.0, None)
    return float(np.log(np.sum(lam**alpha)) / (alpha - 1.0))


def classical_rel_ent(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def classical_renyi(p, q, alpha: float) -> float:
    alpha = _check_alpha(alpha)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.log(np.sum(p**alpha * q ** (1.0 - alpha))) / (alpha - 1.0))


def classical_dv_value(p, q, f) -> float:
    """Donsker–Varadhan objective ``sum p f - sum q e^f + 1``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    f = np.asarray(f, dtype=float)
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > constants.NORMALIZATION_TOL:
            raise ValueError(f"{name} is not a probability vector")
    return float(p @ f - q @ np.exp(f) + 1.0)


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a @ b - b @ a))


def is_commuting_pd(rho: DensityOperator, sigma: DensityOperator, tol: float = 1e-10) -> bool:
    """Whether both states are positive definite and commute, so measured and quantum divergences agree."""
    if commutator_norm(rho.matrix, sigma.matrix) > tol:
        return False
    return bool(_spectrum(rho)[0] > constants.SINGULAR_TOL and _spectrum(sigma)[0] > constants.SINGULAR_TOL)


def _random_spectrum(dim: int, rng: np.random.Generator, min_eigenvalue: float) -> np.ndarray:
    return min_eigenvalue + (1.0 - dim * min_eigenvalue) * rng.dirichlet(np.ones(dim))


def make_commuting_pair(dim: int, rng: np.random.Generator, min_eigenvalue: float = 1e-3):
    """Two positive definite states diagonal in a shared Haar-random basis.

    Returns ``(rho, sigma)``; both spectra have every entry at least
    ``min_eigenvalue``.
    """
    if not 0 < min_eigenvalue <= 1.0 / dim:
        raise ValueError(f"min_eigenvalue must lie in (0, 1/{dim}], got {min_eigenvalue}")
    v = haar_unitary(dim, rng)
    p = _random_spectrum(dim, rng, min_eigenvalue)
    q = _random_spectrum(dim, rng, min_eigenvalue)

    def build(spec):
        m = (v * spec) @ v.conj().T
        return DensityOperator(0.5 * (m + m.conj().T))

    return build(p), build(q)
