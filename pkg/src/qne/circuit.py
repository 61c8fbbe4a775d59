"""Parameterized circuits U(θ) and computational-basis sampling.

The unitary of a layout is the product of its gates in listed order, the
first gate acting first: ``U = G_m ... G_2 G_1``. Measuring a state ρ after
applying ``U†`` gives outcome ``i`` with probability ``<i|U† ρ U|i>``.
Qubit 0 is the most significant bit of a basis index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from qne import constants
from qne.errors import InvalidDimensionError, NumericalFailureError
from qne.qcore import DensityOperator

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("CNOT",)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    param_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError(f"CNOT needs distinct (control, target), got {self.qubits}")
            if self.param_index is not None:
                raise ValueError("CNOT takes no parameter")
        else:
            if len(self.qubits) != 1:
                raise ValueError(f"{self.kind} acts on one qubit, got {self.qubits}")
            if self.param_index is None:
                raise ValueError(f"{self.kind} needs a param_index")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits), "param_index": self.param_index}

    @classmethod
    def from_dict(cls, data: dict) -> "Gate":
        idx = data.get("param_index")
        return cls(str(data["kind"]), tuple(data["qubits"]), None if idx is None else int(idx))


@dataclass(frozen=True)
class CircuitLayout:
    """Fixed gate structure of a parameterized circuit."""

    num_qubits: int
    gates: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.num_qubits < 1:
            raise InvalidDimensionError("a circuit needs at least one qubit")
        if self.num_qubits > constants.MAX_QUBITS:
            raise InvalidDimensionError(f"at most {constants.MAX_QUBITS} qubits are supported")
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        indices = []
        for g in gates:
            if any(q < 0 or q >= self.num_qubits for q in g.qubits):
                raise ValueError(f"gate {g} addresses a qubit outside 0..{self.num_qubits - 1}")
            if g.param_index is not None:
                indices.append(g.param_index)
        if sorted(indices) != list(range(len(indices))):
            raise ValueError("rotation param_index values must be exactly 0..q-1, each once")

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    @property
    def num_params(self) -> int:
        return sum(1 for g in self.gates if g.param_index is not None)

    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits, "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, data: dict) -> "CircuitLayout":
        return cls(int(data["num_qubits"]), tuple(Gate.from_dict(g) for g in data["gates"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CircuitLayout":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "CircuitLayout":
        return cls.from_json(Path(path).read_text())


def random_layout(
    num_qubits: int,
    num_layers: int,
    gates_per_layer_range: Sequence[int],
    rng: np.random.Generator,
) -> CircuitLayout:
    """Draw a random layered layout.

    Every layer draws its gate count uniformly from the inclusive range; each
    gate picks its kind uniformly from RX, RY, RZ and (with two or more
    qubits) CNOT, on distinct random qubits. Rotations are numbered in order.
    """
    if num_qubits < 1:
        raise InvalidDimensionError("a circuit needs at least one qubit")
    lo, hi = (int(x) for x in gates_per_layer_range)
    if num_layers < 1 or not 1 <= lo <= hi <= 8:
        raise ValueError(f"need num_layers >= 1 and 1 <= min <= max <= 8, got {num_layers}, {(lo, hi)}")
    kinds = GATE_KINDS if num_qubits >= 2 else ROTATIONS
    gates = []
    next_param = 0
    for _ in range(num_layers):
        for _ in range(int(rng.integers(lo, hi + 1))):
            kind = kinds[int(rng.integers(len(kinds)))]
            if kind == "CNOT":
                control, target = rng.choice(num_qubits, size=2, replace=False)
                gates.append(Gate("CNOT", (int(control), int(target))))
            else:
                gates.append(Gate(kind, (int(rng.integers(num_qubits)),), next_param))
                next_param += 1
    return CircuitLayout(num_qubits, tuple(gates))


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """``exp(-i angle P / 2)`` for ``P`` in X, Y, Z."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]])
    raise ValueError(f"not a rotation: {kind!r}")


def _cnot_permutation(num_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**num_qubits)
    cbit = 1 << (num_qubits - 1 - control)
    tbit = 1 << (num_qubits - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


def _apply_rotation(m: np.ndarray, num_qubits: int, qubit: int, r: np.ndarray) -> np.ndarray:
    cols = m.shape[1]
    m3 = m.reshape(2**qubit, 2, (2 ** (num_qubits - qubit - 1)) * cols)
    return np.einsum("ab,ibj->iaj", r, m3).reshape(-1, cols)


def build_unitary(layout: CircuitLayout, params) -> np.ndarray:
    """Dense unitary of ``layout`` at the angle vector ``params``."""
    theta = np.asarray(params, dtype=float)
    if theta.shape != (layout.num_params,):
        raise ValueError(f"expected {layout.num_params} parameters, got shape {theta.shape}")
    u = np.eye(layout.dim, dtype=complex)
    for g in layout.gates:
        u = _gate_action(g, layout.num_qubits, theta, u)
    return u


def _gate_action(g: Gate, n: int, theta: np.ndarray, m: np.ndarray) -> np.ndarray:
    if g.kind == "CNOT":
        return m[_cnot_permutation(n, *g.qubits)]
    return _apply_rotation(m, n, g.qubits[0], rotation_matrix(g.kind, theta[g.param_index]))


def shifted_unitaries(layout: CircuitLayout, params, shift: float):
    """Unitaries with one angle moved by ``±shift``, for every angle in turn.

    Returns a list indexed by ``param_index`` of ``(U(θ + shift e_j),
    U(θ - shift e_j))`` pairs. Prefix and suffix gate products are shared, so
    each pair costs one local gate application and two matrix products.
    """
    theta = np.asarray(params, dtype=float)
    if theta.shape != (layout.num_params,):
        raise ValueError(f"expected {layout.num_params} parameters, got shape {theta.shape}")
    n, d = layout.num_qubits, layout.dim
    gates = layout.gates
    prefixes = [np.eye(d, dtype=complex)]  # prefixes[k] = G_k ... G_1
    for g in gates:
        prefixes.append(_gate_action(g, n, theta, prefixes[-1]))
    out = [None] * layout.num_params
    suffix = np.eye(d, dtype=complex)  # G_m ... G_{k+1}
    for k in range(len(gates) - 1, -1, -1):
        g = gates[k]
        if g.param_index is not None:
            pair = []
            for s in (shift, -shift):
                r = rotation_matrix(g.kind, theta[g.param_index] + s)
                pair.append(suffix @ _apply_rotation(prefixes[k], n, g.qubits[0], r))
            out[g.param_index] = tuple(pair)
        # Right-multiplying by G_k: (G_k^T suffix^T)^T.
        suffix = _gate_action_transpose(g, n, theta, suffix)
    return out


def _gate_action_transpose(g: Gate, n: int, theta: np.ndarray, m: np.ndarray) -> np.ndarray:
    """``m @ G`` for a single gate ``G``."""
    if g.kind == "CNOT":
        return m[:, _cnot_permutation(n, *g.qubits)]
    r = rotation_matrix(g.kind, theta[g.param_index])
    return _apply_rotation(m.T, n, g.qubits[0], r.T).T


def full_expressivity_rank(num_qubits: int) -> int:
    """Dimension ``d² - d`` of the unitary orbit of a non-degenerate diagonal matrix."""
    d = 2**num_qubits
    return d * d - d


def expressivity_rank(layout: CircuitLayout, params=None, rng: Optional[np.random.Generator] = None) -> int:
    """Local rank of ``θ ↦ U(θ) D U(θ)†`` for a fixed non-degenerate diagonal ``D``.

    A layout can represent every eigenbasis near ``θ`` only if the rank equals
    :func:`full_expressivity_rank`. Angles default to a uniform draw from
    ``rng`` (seed 0 when omitted).
    """
    if params is None:
        rng = rng or np.random.default_rng(0)
        params = rng.uniform(0.0, 2 * np.pi, layout.num_params)
    if layout.num_params == 0:
        return 0
    k = np.arange(layout.dim, dtype=float)
    diag = k + 0.37 * k**2
    u = build_unitary(layout, params)
    cols = []
    # For RP(θ) = exp(-iθP/2), dU/dθ_j = (U(θ + π e_j) - U(θ - π e_j)) / 4.
    for plus, minus in shifted_unitaries(layout, params, np.pi):
        du = 0.25 * (plus - minus)
        dm = (du * diag) @ u.conj().T
        dm = dm + dm.conj().T
        cols.append(np.concatenate([dm.real.ravel(), dm.imag.ravel()]))
    jac = np.stack(cols, axis=1)
    return int(np.linalg.matrix_rank(jac, tol=1e-6))


def find_expressive_layout(
    num_qubits: int,
    num_layers: int,
    gates_per_layer_range: Sequence[int],
    start_seed: int = 0,
    max_tries: int = 200,
):
    """First layout seed, counting up from ``start_seed``, reaching full rank.

    Returns:
        ``(seed, layout)``.

    Raises:
        ValueError: if no seed in ``max_tries`` attempts is fully expressive.
    """
    target = full_expressivity_rank(num_qubits)
    for seed in range(start_seed, start_seed + max_tries):
        layout = random_layout(num_qubits, num_layers, gates_per_layer_range, np.random.default_rng(seed))
        if layout.num_params >= target and expressivity_rank(layout) == target:
            return seed, layout
    raise ValueError(
        f"no fully expressive {num_layers}-layer layout among seeds {start_seed}..{start_seed + max_tries - 1}"
    )


def wrap_angles(params) -> np.ndarray:
    """Angles reduced to ``[0, 2π)`` for reporting."""
    return np.mod(np.asarray(params, dtype=float), 2 * np.pi)


def clean_distribution(p: np.ndarray) -> np.ndarray:
    """Clip rounding-level negatives and renormalize a probability vector."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -constants.PROB_CLAMP_TOL) or not np.all(np.isfinite(p)):
        raise NumericalFailureError(f"distribution has invalid entries (min {p.min():.3e})")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > constants.NORMALIZATION_TOL:
        raise NumericalFailureError(f"distribution sums to {total!r}")
    return p / total


def distribution_from_unitary(state_matrix: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Diagonal of ``U† ρ U`` as a cleaned probability vector."""
    raw = np.einsum("ai,ai->i", u.conj(), state_matrix @ u).real
    return clean_distribution(raw)


def outcome_distribution(state: DensityOperator, layout: CircuitLayout, params) -> np.ndarray:
    if state.dim != layout.dim:
        raise InvalidDimensionError(f"state dim {state.dim} does not match circuit dim {layout.dim}")
    return distribution_from_unitary(state.matrix, build_unitary(layout, params))


def sample_from(dist: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. indices by inverse-CDF lookup on ``dist``."""
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    cdf = np.cumsum(dist)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, len(dist) - 1)


def sample_outcomes(
    state: DensityOperator,
    layout: CircuitLayout,
    params,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    return sample_from(outcome_distribution(state, layout, params), n, rng)
