"""Variational objectives, gradients and the training loop.

Every objective is a smooth function of a few expectation terms of the form

    E = sum_i w(i) g(f(i)),   g(x) = x  or  g(x) = exp(beta x),

where ``f`` are the eigenvalue-model outputs and ``w`` is a weighting over
basis indices. In exact mode ``w`` is the outcome distribution of ``U† ρ U``;
in sampled mode it is the empirical frequency of a sample batch; for the
maximally mixed state it may be the uniform vector ``1/d`` without any
sampling. Exact and sampled evaluation therefore share one code path.
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from qne import oracle
from qne.circuit import (
    CircuitLayout,
    build_unitary,
    distribution_from_unitary,
    random_layout,
    sample_from,
    shifted_unitaries,
)
from qne.errors import DegenerateBatchError, InvalidDimensionError, TrainingDivergedError
from qne.neural import MlpParams, backward_dense, forward_all
from qne.qcore import DensityOperator

RHO = "rho"
SIGMA = "sigma"


class Quantity(str, enum.Enum):
    MEASURED_REL_ENT = "measured-rel-ent"
    VON_NEUMANN = "von-neumann"
    MEASURED_RENYI = "measured-renyi"
    RENYI = "renyi"
    ROOT_FIDELITY = "root-fidelity"


@dataclass(frozen=True)
class Objective:
    """Which quantity to estimate and, for Rényi variants, its order."""

    quantity: Quantity
    alpha: Optional[float] = None

    def __post_init__(self):
        q = Quantity(self.quantity)
        object.__setattr__(self, "quantity", q)
        if q in (Quantity.MEASURED_RENYI, Quantity.RENYI):
            if self.alpha is None or not self.alpha > 0 or self.alpha == 1.0:
                raise ValueError(f"{q.value} needs alpha in (0, 1) or (1, inf), got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ValueError(f"{q.value} takes no alpha")

    @property
    def direction(self) -> str:
        return "minimize" if self.quantity is Quantity.ROOT_FIDELITY else "maximize"

    @property
    def sign(self) -> float:
        return -1.0 if self.direction == "minimize" else 1.0

    @property
    def uses_maximally_mixed(self) -> bool:
        return self.quantity in (Quantity.VON_NEUMANN, Quantity.RENYI)

    @property
    def terms(self):
        """``(role, beta)`` per expectation term; ``beta=None`` is the linear term."""
        q, a = self.quantity, self.alpha
        if q in (Quantity.MEASURED_REL_ENT, Quantity.VON_NEUMANN):
            return ((RHO, None), (SIGMA, 1.0))
        if q in (Quantity.MEASURED_RENYI, Quantity.RENYI):
            return ((RHO, a - 1.0), (SIGMA, a))
        return ((RHO, -1.0), (SIGMA, 1.0))

    def combine(self, e0: float, e1: float) -> float:
        q = self.quantity
        if q is Quantity.MEASURED_REL_ENT:
            return 1.0 + e0 - e1
        if q is Quantity.VON_NEUMANN:
            return e0 - e1
        if q is Quantity.ROOT_FIDELITY:
            return 0.5 * (e0 + e1)
        if e0 <= 0 or e1 <= 0 or not (math.isfinite(e0) and math.isfinite(e1)):
            raise DegenerateBatchError(f"log of non-positive mean ({e0!r}, {e1!r})")
        a = self.alpha
        return a / (a - 1.0) * math.log(e0) - math.log(e1)

    def partials(self, e0: float, e1: float):
        """Derivatives of :meth:`combine` with respect to each term."""
        q = self.quantity
        if q in (Quantity.MEASURED_REL_ENT, Quantity.VON_NEUMANN):
            return 1.0, -1.0
        if q is Quantity.ROOT_FIDELITY:
            return 0.5, 0.5
        if e0 <= 0 or e1 <= 0:
            raise DegenerateBatchError(f"log of non-positive mean ({e0!r}, {e1!r})")
        a = self.alpha
        return a / (a - 1.0) / e0, -1.0 / e1

    def estimate(self, value: float, dim: int) -> float:
        """Map an objective value to the estimated quantity."""
        if self.quantity is Quantity.VON_NEUMANN:
            return math.log(dim) - 1.0 - value
        if self.quantity is Quantity.RENYI:
            return math.log(dim) - value
        return value

    def label(self) -> str:
        return self.quantity.value if self.alpha is None else f"{self.quantity.value}(alpha={self.alpha:g})"


# -- eigenvalue models ------------------------------------------------------


@dataclass
class NeuralEigenvalues:
    params: MlpParams

    @property
    def num_qubits(self) -> int:
        return self.params.input_dim

    @property
    def num_params(self) -> int:
        return self.params.num_params

    def values(self) -> np.ndarray:
        return forward_all(self.params)

    def backward(self, upstream: np.ndarray) -> MlpParams:
        return backward_dense(self.params, upstream)

    def flat_backward(self, upstream: np.ndarray) -> np.ndarray:
        return self.backward(upstream).to_vector()

    def vector(self) -> np.ndarray:
        return self.params.to_vector()

    def with_vector(self, vec) -> "NeuralEigenvalues":
        return NeuralEigenvalues(self.params.like_vector(vec))


@dataclass
class ExplicitEigenvalues:
    """Baseline storing all ``d`` eigenvalues directly."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        self.eigenvalues = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.eigenvalues)):
            raise ValueError("explicit eigenvalues must be finite")

    @property
    def num_qubits(self) -> int:
        return len(self.eigenvalues).bit_length() - 1

    @property
    def num_params(self) -> int:
        return len(self.eigenvalues)

    def values(self) -> np.ndarray:
        return self.eigenvalues.copy()

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return np.array(upstream, dtype=float)

    flat_backward = backward

    def vector(self) -> np.ndarray:
        return self.eigenvalues.copy()

    def with_vector(self, vec) -> "ExplicitEigenvalues":
        return ExplicitEigenvalues(vec)


EigenvalueModel = Union[NeuralEigenvalues, ExplicitEigenvalues]


def default_hidden_dim(num_qubits: int) -> int:
    """Width 10 for two qubits, 30 for six."""
    return 5 * num_qubits


def init_model(variant: str, num_qubits: int, rng: np.random.Generator, hidden_dim: Optional[int] = None):
    if variant == "neural":
        return NeuralEigenvalues(MlpParams.glorot(num_qubits, hidden_dim or default_hidden_dim(num_qubits), rng))
    if variant == "explicit":
        return ExplicitEigenvalues(rng.uniform(0.0, 1.0, size=2**num_qubits))
    raise ValueError(f"unknown eigenvalue model {variant!r}")


@dataclass
class HermitianAnsatz:
    """``H(w, θ) = sum_i f_w(i) U(θ)|i><i|U(θ)†``."""

    layout: CircuitLayout
    theta: np.ndarray
    eigenvalues: EigenvalueModel

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.theta.shape != (self.layout.num_params,):
            raise ValueError(f"expected {self.layout.num_params} angles, got {self.theta.shape}")
        if self.eigenvalues.num_qubits != self.layout.num_qubits:
            raise InvalidDimensionError("eigenvalue model and circuit disagree on qubit count")

    @property
    def dim(self) -> int:
        return self.layout.dim

    def unitary(self) -> np.ndarray:
        return build_unitary(self.layout, self.theta)

    def matrix(self) -> np.ndarray:
        u = self.unitary()
        return (u * self.eigenvalues.values()) @ u.conj().T

    def with_theta(self, theta) -> "HermitianAnsatz":
        return replace(self, theta=np.array(theta, dtype=float))

    def with_eigenvalues(self, model) -> "HermitianAnsatz":
        return replace(self, eigenvalues=model)


@dataclass(frozen=True)
class SampleBatch:
    """Measurement outcomes drawn at one θ.

    ``sigma_samples`` is ``None`` exactly when ``uniform_analytic`` is set,
    meaning the maximally mixed term is summed exactly instead of sampled.
    """

    rho_samples: np.ndarray
    sigma_samples: Optional[np.ndarray] = None
    uniform_analytic: bool = False

    def __post_init__(self):
        if self.uniform_analytic != (self.sigma_samples is None):
            raise ValueError("sigma samples must be given unless the uniform-analytic marker is set")
        if self.sigma_samples is not None and len(self.sigma_samples) != len(self.rho_samples):
            raise ValueError("rho and sigma batches must have equal length")

    @property
    def n(self) -> int:
        return len(self.rho_samples)


# -- term evaluation --------------------------------------------------------


def _g(f: np.ndarray, beta: Optional[float]) -> np.ndarray:
    return f if beta is None else np.exp(beta * f)


def _dg(f: np.ndarray, beta: Optional[float]) -> np.ndarray:
    return np.ones_like(f) if beta is None else beta * np.exp(beta * f)


def _frequencies(samples: np.ndarray, d: int) -> np.ndarray:
    return np.bincount(np.asarray(samples), minlength=d) / len(samples)


def _resolve_sigma(obj: Objective, sigma: Optional[DensityOperator], d: int) -> Optional[DensityOperator]:
    """``None`` stands for the maximally mixed state handled without a quantum device."""
    if obj.uses_maximally_mixed:
        if sigma is not None:
            raise ValueError(f"{obj.quantity.value} always compares against the maximally mixed state")
        return None
    if sigma is None:
        raise ValueError(f"{obj.quantity.value} needs a second state sigma")
    if sigma.dim != d:
        raise InvalidDimensionError(f"sigma dim {sigma.dim} does not match circuit dim {d}")
    return sigma


def _check_rho(rho: DensityOperator, d: int) -> None:
    if rho.dim != d:
        raise InvalidDimensionError(f"rho dim {rho.dim} does not match circuit dim {d}")


def _exact_weights(u: np.ndarray, rho: DensityOperator, sigma: Optional[DensityOperator]):
    d = u.shape[0]
    w_sigma = np.full(d, 1.0 / d) if sigma is None else distribution_from_unitary(sigma.matrix, u)
    return distribution_from_unitary(rho.matrix, u), w_sigma


def _batch_weights(batch: SampleBatch, d: int):
    w_sigma = np.full(d, 1.0 / d) if batch.uniform_analytic else _frequencies(batch.sigma_samples, d)
    return _frequencies(batch.rho_samples, d), w_sigma


def _term_means(obj: Objective, f: np.ndarray, weights) -> tuple:
    return tuple(float(w @ _g(f, beta)) for w, (_, beta) in zip(weights, obj.terms))


def _draw(
    u: np.ndarray,
    rho: DensityOperator,
    sigma: Optional[DensityOperator],
    n: int,
    rng: np.random.Generator,
    uniform: str,
) -> SampleBatch:
    d = u.shape[0]
    rho_s = sample_from(distribution_from_unitary(rho.matrix, u), n, rng)
    if sigma is not None:
        return SampleBatch(rho_s, sample_from(distribution_from_unitary(sigma.matrix, u), n, rng))
    if uniform == "analytic":
        return SampleBatch(rho_s, None, uniform_analytic=True)
    if uniform == "sampled":
        return SampleBatch(rho_s, rng.integers(d, size=n))
    raise ValueError(f"unknown uniform-term mode {uniform!r}")


def draw_batch(
    obj: Objective,
    ansatz: HermitianAnsatz,
    rho: DensityOperator,
    sigma: Optional[DensityOperator],
    n: int,
    rng: np.random.Generator,
    uniform: str = "analytic",
) -> SampleBatch:
    """Sample ``n`` outcomes per state at the ansatz's current θ.

    For entropy quantities the maximally mixed term is summed exactly when
    ``uniform="analytic"`` and sampled classically when ``uniform="sampled"``.
    """
    _check_rho(rho, ansatz.dim)
    sigma = _resolve_sigma(obj, sigma, ansatz.dim)
    return _draw(ansatz.unitary(), rho, sigma, n, rng, uniform)


def eval_trace_terms_exact(ansatz: HermitianAnsatz, state: DensityOperator, beta: float) -> float:
    """``Tr[exp(beta H) state]`` through the outcome distribution."""
    _check_rho(state, ansatz.dim)
    dist = distribution_from_unitary(state.matrix, ansatz.unitary())
    return float(dist @ np.exp(beta * ansatz.eigenvalues.values()))


def eval_linear_term_exact(ansatz: HermitianAnsatz, state: DensityOperator) -> float:
    """``Tr[H state]`` through the outcome distribution."""
    _check_rho(state, ansatz.dim)
    dist = distribution_from_unitary(state.matrix, ansatz.unitary())
    return float(dist @ ansatz.eigenvalues.values())


def _weights(obj, ansatz, rho, sigma, batch, u=None):
    d = ansatz.dim
    _check_rho(rho, d)
    sigma = _resolve_sigma(obj, sigma, d)
    if batch is None:
        return _exact_weights(ansatz.unitary() if u is None else u, rho, sigma)
    return _batch_weights(batch, d)


def term_means(obj, ansatz, rho, sigma=None, batch: Optional[SampleBatch] = None) -> tuple:
    """The two expectation terms of ``obj``; exact when ``batch`` is ``None``."""
    return _term_means(obj, ansatz.eigenvalues.values(), _weights(obj, ansatz, rho, sigma, batch))


def objective_value(obj, ansatz, rho, sigma=None, batch: Optional[SampleBatch] = None) -> float:
    """Variational objective: exact when ``batch`` is ``None``, else the sample-mean form.

    The returned number is the quantity being maximized (or, for root
    fidelity, minimized). Use :func:`estimate_value` for the entropy scale.
    """
    return obj.combine(*term_means(obj, ansatz, rho, sigma, batch))


def estimate_value(obj, ansatz, rho, sigma=None, batch: Optional[SampleBatch] = None) -> float:
    return obj.estimate(objective_value(obj, ansatz, rho, sigma, batch), ansatz.dim)


# -- gradients --------------------------------------------------------------


def _upstream(obj: Objective, f: np.ndarray, weights, means) -> np.ndarray:
    partials = obj.partials(*means)
    out = np.zeros_like(f)
    for c, w, (_, beta) in zip(partials, weights, obj.terms):
        out += c * w * _dg(f, beta)
    return out


def grad_w(obj, ansatz, rho, sigma=None, batch: Optional[SampleBatch] = None):
    """Gradient with respect to the eigenvalue-model parameters, samples held fixed.

    Returns an :class:`MlpParams` for neural models and a length-``d`` vector
    for the explicit baseline.
    """
    f = ansatz.eigenvalues.values()
    weights = _weights(obj, ansatz, rho, sigma, batch)
    return ansatz.eigenvalues.backward(_upstream(obj, f, weights, _term_means(obj, f, weights)))


def _grad_w_flat(obj, model, f, weights, means) -> np.ndarray:
    return model.flat_backward(_upstream(obj, f, weights, means))


def _grad_theta(obj, ansatz, rho, sigma, f, means, n, rng, uniform) -> np.ndarray:
    """Parameter-shift gradient; ``sigma=None`` means the θ-independent uniform term."""
    partials = obj.partials(*means)
    dependent = [k for k, (role, _) in enumerate(obj.terms) if role == RHO or sigma is not None]
    states = {RHO: rho, SIGMA: sigma}
    grad = np.zeros(ansatz.layout.num_params)
    if not dependent:
        return grad
    gvals = {k: _g(f, obj.terms[k][1]) for k in dependent}
    for j, pair in enumerate(shifted_unitaries(ansatz.layout, ansatz.theta, 0.5 * np.pi)):
        diff = np.zeros(len(obj.terms))
        for s, u in zip((1.0, -1.0), pair):
            for k in dependent:
                dist = distribution_from_unitary(states[obj.terms[k][0]].matrix, u)
                if n is not None:
                    dist = _frequencies(sample_from(dist, n, rng), len(dist))
                diff[k] += s * float(dist @ gvals[k])
        grad[j] = sum(partials[k] * 0.5 * diff[k] for k in dependent)
    return grad


def grad_theta(
    obj,
    ansatz,
    rho,
    sigma=None,
    n: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    batch: Optional[SampleBatch] = None,
    uniform: str = "analytic",
) -> np.ndarray:
    """Parameter-shift gradient with respect to the circuit angles.

    With ``n=None`` every shifted term is evaluated exactly. Otherwise each
    shifted evaluation draws a fresh batch of ``n`` samples from ``rng``; the
    unshifted term values used in the chain rule for log terms come from
    ``batch`` (drawn fresh when not supplied).
    """
    d = ansatz.dim
    _check_rho(rho, d)
    sigma = _resolve_sigma(obj, sigma, d)
    f = ansatz.eigenvalues.values()
    if n is None:
        weights = _exact_weights(ansatz.unitary(), rho, sigma)
    else:
        if rng is None:
            raise ValueError("sampled parameter-shift gradients need an rng")
        if batch is None:
            batch = _draw(ansatz.unitary(), rho, sigma, n, rng, uniform)
        weights = _batch_weights(batch, d)
    return _grad_theta(obj, ansatz, rho, sigma, f, _term_means(obj, f, weights), n, rng, uniform)


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of one training run.

    ``samples_per_term=None`` trains on the exact objective instead of
    sample means. ``final_samples`` sets the batch size of the single
    evaluation at the final parameters; ``None`` reuses ``samples_per_term``.
    """

    epochs: int = 1000
    learning_rate: float = 0.01
    samples_per_term: Optional[int] = 100
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    master_seed: int = 0
    runs: int = 10
    uniform: str = "analytic"
    final_samples: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.samples_per_term is not None and self.samples_per_term < 1:
            raise ValueError("samples_per_term must be at least 1")
        if self.optimizer not in ("plain", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.uniform not in ("analytic", "sampled"):
            raise ValueError(f"unknown uniform-term mode {self.uniform!r}")
        if self.final_samples is not None and self.final_samples < 1:
            raise ValueError("final_samples must be at least 1")

    @property
    def exact(self) -> bool:
        return self.samples_per_term is None


@dataclass
class TrainingTrace:
    objective: list = field(default_factory=list)
    estimate: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    final_ansatz: Optional[HermitianAnsatz] = None
    final_objective: Optional[float] = None
    final_estimate: Optional[float] = None
    seed: Optional[tuple] = None

    def __len__(self):
        return len(self.objective)


class _Adam:
    def __init__(self, size, beta1, beta2, eps):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    obj: Objective,
    layout: CircuitLayout,
    rho: DensityOperator,
    sigma: Optional[DensityOperator],
    config: TrainingConfig,
    rng: np.random.Generator,
    variant: str = "neural",
    hidden_dim: Optional[int] = None,
    initial: Optional[HermitianAnsatz] = None,
):
    """Optimize the objective by alternating parameter-shift and backprop steps.

    Each epoch draws a fresh batch at the current angles, evaluates both the
    angle and the eigenvalue-model gradients at the current parameters, then
    updates both blocks (ascent, or descent for root fidelity). The estimate
    is the objective at the final parameters on a fresh batch, mapped to the
    quantity's scale.

    Returns:
        ``(trace, estimate)``.
    """
    d = layout.dim
    _check_rho(rho, d)
    sigma = _resolve_sigma(obj, sigma, d)
    if initial is None:
        model = init_model(variant, layout.num_qubits, rng, hidden_dim)
        theta = rng.uniform(0.0, 2 * np.pi, size=layout.num_params)
    else:
        model, theta = initial.eigenvalues, initial.theta.copy()
    n = config.samples_per_term
    eta = config.learning_rate
    sign = obj.sign
    wvec = model.vector()
    if config.optimizer == "adam":
        opt_theta = _Adam(len(theta), config.beta1, config.beta2, config.eps)
        opt_w = _Adam(len(wvec), config.beta1, config.beta2, config.eps)
    trace = TrainingTrace()

    def evaluate(model, theta, size=n):
        u = build_unitary(layout, theta)
        if size is None:
            weights = _exact_weights(u, rho, sigma)
        else:
            weights = _batch_weights(_draw(u, rho, sigma, size, rng, config.uniform), d)
        f = model.values()
        means = _term_means(obj, f, weights)
        return f, weights, means, obj.combine(*means)

    for _ in range(config.epochs):
        t0 = time.perf_counter()
        f, weights, means, value = evaluate(model, theta)
        if not math.isfinite(value):
            raise TrainingDivergedError(f"objective became {value!r} at epoch {len(trace) + 1}", trace)
        trace.objective.append(value)
        trace.estimate.append(obj.estimate(value, d))
        g_theta = _grad_theta(obj, HermitianAnsatz(layout, theta, model), rho, sigma, f, means, n, rng, config.uniform)
        g_w = _grad_w_flat(obj, model, f, weights, means)
        if config.optimizer == "adam":
            theta = theta + sign * eta * opt_theta.step(g_theta)
            wvec = wvec + sign * eta * opt_w.step(g_w)
        else:
            theta = theta + sign * eta * g_theta
            wvec = wvec + sign * eta * g_w
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(wvec))):
            raise TrainingDivergedError(f"parameters became non-finite at epoch {len(trace)}", trace)
        model = model.with_vector(wvec)
        trace.wall_time.append(time.perf_counter() - t0)

    final_n = n if n is None or config.final_samples is None else config.final_samples
    _, _, _, final = evaluate(model, theta, final_n)
    if not math.isfinite(final):
        raise TrainingDivergedError(f"final objective is {final!r}", trace)
    trace.final_ansatz = HermitianAnsatz(layout, theta, model)
    trace.final_objective = final
    trace.final_estimate = obj.estimate(final, d)
    return trace, trace.final_estimate


# -- ground truth and multi-run estimation ------------------------------------


def ground_truth(obj: Objective, rho: DensityOperator, sigma: Optional[DensityOperator] = None):
    """Oracle value for the instance, or ``None`` when no closed form applies."""
    q = obj.quantity
    if q is Quantity.VON_NEUMANN:
        return oracle.GroundTruth(q.value, oracle.von_neumann(rho), "closed-form")
    if q is Quantity.RENYI:
        return oracle.GroundTruth(q.value, oracle.renyi_entropy(rho, obj.alpha), "closed-form")
    if q is Quantity.ROOT_FIDELITY:
        return oracle.GroundTruth(q.value, oracle.root_fidelity(rho, sigma), "closed-form")
    if not oracle.is_commuting_pd(rho, sigma):
        return None
    if q is Quantity.MEASURED_REL_ENT:
        return oracle.GroundTruth(q.value, oracle.quantum_rel_ent(rho, sigma), "commuting-reduction")
    return oracle.GroundTruth(q.value, oracle.sandwiched_renyi(rho, sigma, obj.alpha), "commuting-reduction")


def run_rng(master_seed: int, run_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one run, derived from ``(master_seed, stream, run_index)``."""
    return np.random.default_rng([int(master_seed), int(stream), int(run_index)])


def _run_one(job):
    obj, layout, rho, sigma, config, variant, hidden_dim, run_index, stream = job
    rng = run_rng(config.master_seed, run_index, stream)
    trace, estimate = train(obj, layout, rho, sigma, config, rng, variant=variant, hidden_dim=hidden_dim)
    trace.seed = (config.master_seed, stream, run_index)
    trace.wall_time = list(trace.wall_time)
    return trace


def run_many(
    obj: Objective,
    layout: CircuitLayout,
    rho: DensityOperator,
    sigma: Optional[DensityOperator],
    config: TrainingConfig,
    variant: str = "neural",
    hidden_dim: Optional[int] = None,
    jobs: int = 1,
    stream: int = 0,
) -> list:
    """``config.runs`` independent trainings, returned in run order."""
    work = [(obj, layout, rho, sigma, config, variant, hidden_dim, r, stream) for r in range(config.runs)]
    if jobs <= 1 or config.runs == 1:
        return [_run_one(job) for job in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


@dataclass
class EstimateReport:
    objective: Objective
    estimates: np.ndarray
    traces: list
    ground_truth: Optional[oracle.GroundTruth]
    layout: CircuitLayout

    @property
    def estimate(self) -> float:
        return float(np.mean(self.estimates))

    @property
    def std(self) -> float:
        return float(np.std(self.estimates))


def estimate_quantity(
    obj: Objective,
    rho: DensityOperator,
    sigma: Optional[DensityOperator] = None,
    config: Optional[TrainingConfig] = None,
    layout: Optional[CircuitLayout] = None,
    num_layers: Optional[int] = None,
    gates_per_layer: Sequence[int] = (3, 4),
    layout_seed: int = 0,
    variant: str = "neural",
    hidden_dim: Optional[int] = None,
    jobs: int = 1,
) -> EstimateReport:
    """Train ``config.runs`` times on a fixed layout and attach the oracle value.

    Without an explicit ``layout`` one is drawn from ``layout_seed`` with
    ``num_layers`` (default 3 for up to two qubits, 5 beyond) layers.
    """
    config = config or TrainingConfig()
    nq = rho.num_qubits
    if layout is None:
        layers = num_layers or (3 if nq <= 2 else 5)
        layout = random_layout(nq, layers, gates_per_layer, np.random.default_rng(layout_seed))
    traces = run_many(obj, layout, rho, sigma, config, variant, hidden_dim, jobs)
    truth = ground_truth(obj, rho, None if obj.uses_maximally_mixed else sigma)
    return EstimateReport(obj, np.array([t.final_estimate for t in traces]), traces, truth, layout)
