"""Command-line harness: ``qne <subcommand> --config path.json [--seed N] [--out dir]``.

Subcommands:
    gen-instance     write rho.json (and sigma.json) plus provenance.json
    experiment       train every run of every variant, write trace.csv and summary.json
    oracle           print the closed-form value for an instance
    check-gradients  compare exact gradients with central finite differences

The seed is taken from ``--seed``, else the config's ``master_seed``, else
the ``QNE_SEED`` environment variable, else 0.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from qne import circuit, estimators, oracle, qcore
from qne.errors import QneError, TrainingDivergedError
from qne.estimators import (
    ExplicitEigenvalues,
    HermitianAnsatz,
    NeuralEigenvalues,
    Objective,
    Quantity,
    TrainingConfig,
)
from qne.neural import MlpParams
from qne.qcore import DensityOperator

VARIANTS = ("neural", "explicit")
SOURCES = ("auto", "generate-random", "generate-commuting", "load")
GRADIENT_THRESHOLD = 1e-4
# Stream 0..len(VARIANTS)-1 belong to training runs.
INSTANCE_STREAM = 100
CHECK_STREAM = 200


@dataclass
class CircuitSpec:
    num_layers: Optional[int] = None
    gates_per_layer: tuple = (3, 4)
    layout_seed: int = 0

    def layers_for(self, num_qubits: int) -> int:
        return self.num_layers or (3 if num_qubits <= 2 else 5)


@dataclass
class TrainingSpec:
    epochs: int = 1000
    learning_rate: float = 0.01
    samples_per_term: Optional[int] = 100
    optimizer: str = "adam"
    final_samples: Optional[int] = None
    uniform: str = "analytic"


@dataclass
class InstanceSpec:
    source: str = "auto"
    path: Optional[str] = None
    min_eigenvalue: float = 1e-3


@dataclass
class ExperimentConfig:
    quantity: str = "von-neumann"
    alpha: Optional[float] = None
    num_qubits: int = 2
    circuit: CircuitSpec = field(default_factory=CircuitSpec)
    hidden_dim: Optional[int] = None
    variants: tuple = VARIANTS
    training: TrainingSpec = field(default_factory=TrainingSpec)
    runs: int = 10
    master_seed: Optional[int] = None
    instance: InstanceSpec = field(default_factory=InstanceSpec)
    gradient_checks: int = 20

    def __post_init__(self):
        self.objective  # validates quantity and alpha
        if not 1 <= self.num_qubits <= 6:
            raise ValueError(f"num_qubits must be in 1..6, got {self.num_qubits}")
        self.variants = tuple(self.variants)
        if not self.variants or any(v not in VARIANTS for v in self.variants) or len(set(self.variants)) != len(self.variants):
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}, got {self.variants}")
        self.circuit.gates_per_layer = tuple(int(x) for x in self.circuit.gates_per_layer)
        if self.instance.source not in SOURCES:
            raise ValueError(f"instance source must be one of {SOURCES}")
        if self.instance.source == "load" and not self.instance.path:
            raise ValueError("instance source 'load' needs a path")
        if self.runs < 1 or self.gradient_checks < 1:
            raise ValueError("runs and gradient_checks must be positive")
        self.training_config(0)

    @property
    def objective(self) -> Objective:
        return Objective(Quantity(self.quantity), self.alpha)

    def training_config(self, seed: int) -> TrainingConfig:
        return TrainingConfig(master_seed=seed, runs=self.runs, **asdict(self.training))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["circuit"]["gates_per_layer"] = list(self.circuit.gates_per_layer)
        out["variants"] = list(self.variants)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        _check_keys(cls, data, "config")
        nested = {"circuit": CircuitSpec, "training": TrainingSpec, "instance": InstanceSpec}
        for key, kind in nested.items():
            if key in data:
                part = dict(data[key])
                _check_keys(kind, part, key)
                data[key] = kind(**part)
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_keys(kind, data: dict, where: str) -> None:
    unknown = set(data) - {f.name for f in fields(kind)}
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")


def resolve_seed(flag: Optional[int], config: ExperimentConfig) -> int:
    if flag is not None:
        return int(flag)
    if config.master_seed is not None:
        return int(config.master_seed)
    env = os.environ.get("QNE_SEED")
    return int(env) if env not in (None, "") else 0


def _needs_sigma(obj: Objective) -> bool:
    return not obj.uses_maximally_mixed


def _instance_mode(config: ExperimentConfig) -> str:
    source = config.instance.source
    if source != "auto":
        return source
    if config.objective.quantity in (Quantity.MEASURED_REL_ENT, Quantity.MEASURED_RENYI):
        return "generate-commuting"
    return "generate-random"


def generate_instance(config: ExperimentConfig, seed: int):
    """``(rho, sigma_or_None, provenance)`` drawn deterministically from ``seed``."""
    mode = _instance_mode(config)
    obj = config.objective
    d = 2**config.num_qubits
    rng = np.random.default_rng([seed, INSTANCE_STREAM])
    sigma = None
    if mode == "generate-commuting":
        if not _needs_sigma(obj):
            raise ValueError("commuting-pair instances need a two-state quantity")
        rho, sigma = oracle.make_commuting_pair(d, rng, config.instance.min_eigenvalue)
        extra = {"min_eigenvalue": config.instance.min_eigenvalue}
    elif mode == "generate-random":
        rho = qcore.random_mixed_state(config.num_qubits, rng)
        if _needs_sigma(obj):
            sigma = qcore.random_mixed_state(config.num_qubits, rng)
        extra = {"purification_dim": d * d}
    else:
        raise ValueError(f"cannot generate an instance from source {mode!r}")
    provenance = {"mode": mode, "seed": seed, "num_qubits": config.num_qubits, "quantity": obj.quantity.value, **extra}
    return rho, sigma, provenance


def load_instance(path, obj: Objective):
    base = Path(path)
    rho = DensityOperator.load(base / "rho.json")
    sigma = DensityOperator.load(base / "sigma.json") if _needs_sigma(obj) else None
    return rho, sigma


def _instance(config: ExperimentConfig, seed: int):
    if _instance_mode(config) == "load":
        rho, sigma = load_instance(config.instance.path, config.objective)
        if rho.num_qubits != config.num_qubits:
            raise ValueError(f"instance has {rho.num_qubits} qubits, config says {config.num_qubits}")
        return rho, sigma, {"mode": "load", "path": str(config.instance.path)}
    return generate_instance(config, seed)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_instance(out: Path, rho, sigma, provenance) -> None:
    _write_text(out / "rho.json", json.dumps(rho.to_dict()) + "\n")
    if sigma is not None:
        _write_text(out / "sigma.json", json.dumps(sigma.to_dict()) + "\n")
    _write_text(out / "provenance.json", _dump_json(provenance))


# -- experiment ---------------------------------------------------------------


def _train_job(job):
    obj, layout, rho, sigma, config, variant, hidden_dim, run_index, stream = job
    rng = estimators.run_rng(config.master_seed, run_index, stream)
    try:
        trace, _ = estimators.train(obj, layout, rho, sigma, config, rng, variant=variant, hidden_dim=hidden_dim)
        return trace, None
    except TrainingDivergedError as exc:
        return exc.trace, str(exc)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_trace_csv(path: Path, rows) -> None:
    """Rows of ``(run, epoch, objective, estimate[, variant])``; epochs count from 1."""
    rows = list(rows)
    header = ["run", "epoch", "objective", "estimate"]
    if rows and len(rows[0]) == 5:
        header.append("variant")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            run, epoch, obj, est = row[:4]
            writer.writerow([run, epoch, _fmt(obj), _fmt(est), *row[4:]])


def _per_epoch_stats(traces):
    k = min(len(t.estimate) for t in traces) if traces else 0
    if k == 0:
        return {"mean": [], "std": []}
    est = np.array([t.estimate[:k] for t in traces])
    return {"mean": est.mean(axis=0).tolist(), "std": est.std(axis=0).tolist()}


def run_experiment(config: ExperimentConfig, seed: int, out: Path, jobs: int = 1) -> int:
    """Run the full protocol and write outputs. Returns the exit code."""
    obj = config.objective
    rho, sigma, provenance = _instance(config, seed)
    nq = config.num_qubits
    layers = config.circuit.layers_for(nq)
    layout = circuit.random_layout(
        nq, layers, config.circuit.gates_per_layer, np.random.default_rng(config.circuit.layout_seed)
    )
    tcfg = config.training_config(seed)
    work = []
    for variant in config.variants:
        stream = VARIANTS.index(variant)
        work += [(obj, layout, rho, sigma, tcfg, variant, config.hidden_dim, r, stream) for r in range(config.runs)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_job, work))
    else:
        results = [_train_job(job) for job in work]

    out.mkdir(parents=True, exist_ok=True)
    if provenance["mode"] != "load":
        write_instance(out, rho, sigma, provenance)
    _write_text(out / "layout.json", layout.to_json())

    rows = []
    per_variant = {}
    errors = []
    for (job, (trace, err)) in zip(work, results):
        variant, run = job[5], job[7]
        for epoch, (o, e) in enumerate(zip(trace.objective, trace.estimate), start=1):
            rows.append((run, epoch, o, e, variant))
        per_variant.setdefault(variant, []).append(trace)
        if err is not None:
            errors.append(f"{variant} run {run}: {err}")
    write_trace_csv(out / "trace.csv", rows)

    truth = estimators.ground_truth(obj, rho, sigma)
    variants = {}
    for variant, traces in per_variant.items():
        finals = [t.final_estimate for t in traces if t.final_estimate is not None]
        variants[variant] = {
            "estimates": finals,
            "estimate_mean": float(np.mean(finals)) if finals else None,
            "estimate_std": float(np.std(finals)) if finals else None,
            "per_epoch": _per_epoch_stats(traces),
        }
    primary = variants[config.variants[0]]
    summary = {
        "quantity": obj.quantity.value,
        "alpha": obj.alpha,
        "estimate_mean": primary["estimate_mean"],
        "estimate_std": primary["estimate_std"],
        "ground_truth": None if truth is None else truth.value,
        "ground_truth_method": None if truth is None else truth.method,
        "runs": config.runs,
        "epochs": config.training.epochs,
        "seed": seed,
        "layout_seed": config.circuit.layout_seed,
        "primary_variant": config.variants[0],
        "variants": variants,
        "status": "diverged" if errors else "ok",
        "errors": errors,
        "instance": provenance,
        "config": config.to_dict(),
    }
    _write_text(out / "summary.json", _dump_json(summary))
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    est, std = primary["estimate_mean"], primary["estimate_std"]
    line = f"{obj.label()}: estimate {est:.6f} ± {std:.6f}"
    if truth is not None:
        line += f" (ground truth {truth.value:.6f})"
    print(line)
    return 0


# -- gradient self-check ------------------------------------------------------


def _fd(fun, x, step=1e-5):
    out = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = step
        out[k] = (fun(x + e) - fun(x - e)) / (2 * step)
    return out


def gradient_errors(obj, ansatz, rho, sigma, corrupt: float = 0.0) -> np.ndarray:
    """Per-entry relative errors of the ``q`` angle and ``p`` model gradients.

    Each block is compared with central differences and scaled by the largest
    finite-difference entry of that block. ``corrupt`` perturbs the analytic
    gradients as a negative control.
    """

    def value_theta(t):
        return estimators.objective_value(obj, ansatz.with_theta(t), rho, sigma)

    model = ansatz.eigenvalues

    def value_w(v):
        return estimators.objective_value(obj, ansatz.with_eigenvalues(model.with_vector(v)), rho, sigma)

    g_theta = estimators.grad_theta(obj, ansatz, rho, sigma)
    g_w = estimators.grad_w(obj, ansatz, rho, sigma)
    g_w = g_w.to_vector() if isinstance(g_w, MlpParams) else np.asarray(g_w)
    if corrupt:
        g_theta = g_theta * (1 + corrupt)
        g_w = g_w * (1 + corrupt)
    errs = []
    for analytic, fd in ((g_theta, _fd(value_theta, ansatz.theta)), (g_w, _fd(value_w, model.vector()))):
        scale = max(float(np.max(np.abs(fd))) if fd.size else 0.0, 1e-12)
        errs.append(np.abs(analytic - fd) / scale)
    return np.concatenate(errs)


def check_gradients(config: ExperimentConfig, seed: int, corrupt: float = 0.0):
    """Exact-mode gradient check over all five objectives.

    Returns:
        ``(passed, report)`` where ``report`` maps each objective label to
        its worst relative error and the per-entry errors of every ansatz.
    """
    nq = config.num_qubits
    rng = np.random.default_rng([seed, CHECK_STREAM])
    rho = qcore.random_mixed_state(nq, rng)
    sigma = qcore.random_mixed_state(nq, rng)
    objectives = [
        Objective(Quantity.MEASURED_REL_ENT),
        Objective(Quantity.VON_NEUMANN),
        Objective(Quantity.MEASURED_RENYI, config.alpha if config.alpha is not None else 2.5),
        Objective(Quantity.RENYI, config.alpha if config.alpha is not None else 2.5),
        Objective(Quantity.ROOT_FIDELITY),
    ]
    hidden = config.hidden_dim or estimators.default_hidden_dim(nq)
    report = {}
    passed = True
    for obj in objectives:
        sig = None if obj.uses_maximally_mixed else sigma
        worst = 0.0
        entries = []
        for k in range(config.gradient_checks):
            layout = circuit.random_layout(nq, config.circuit.layers_for(nq), config.circuit.gates_per_layer, rng)
            theta = rng.uniform(0, 2 * np.pi, layout.num_params)
            if "neural" in config.variants and (k % 2 == 0 or "explicit" not in config.variants):
                vec = rng.uniform(-1, 1, hidden * (nq + 2) + 1)
                model = NeuralEigenvalues(MlpParams.from_vector(vec, nq, hidden))
            else:
                model = ExplicitEigenvalues(rng.uniform(-1, 1, 2**nq))
            errs = gradient_errors(obj, HermitianAnsatz(layout, theta, model), rho, sig, corrupt)
            worst = max(worst, float(errs.max()))
            entries.append({"q": layout.num_params, "p": model.num_params, "errors": errs.tolist()})
        ok = worst <= GRADIENT_THRESHOLD
        passed &= ok
        report[obj.label()] = {"max_rel_error": worst, "passed": ok, "ansatze": entries}
    return passed, report


# -- argument handling ----------------------------------------------------------


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    return ExperimentConfig.load(args.config)


def _cmd_gen_instance(args) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    rho, sigma, provenance = generate_instance(config, seed)
    out = Path(args.out)
    write_instance(out, rho, sigma, provenance)
    print(f"wrote instance to {out}")
    return 0


def _cmd_experiment(args) -> int:
    config = _load_config(args)
    if args.layout_seed is not None:
        config.circuit.layout_seed = args.layout_seed
    seed = resolve_seed(args.seed, config)
    return run_experiment(config, seed, Path(args.out), jobs=args.jobs)


def _cmd_oracle(args) -> int:
    config = _load_config(args)
    quantity = args.quantity or config.quantity
    alpha = args.alpha if args.alpha is not None else (config.alpha if quantity == config.quantity else None)
    obj = Objective(Quantity(quantity), alpha)
    if args.rho is not None:
        rho = DensityOperator.load(args.rho)
        sigma = DensityOperator.load(args.sigma) if _needs_sigma(obj) else None
    else:
        base = args.instance or config.instance.path
        if base is None:
            raise ValueError("oracle needs --rho/--sigma, --instance or an instance path in the config")
        rho, sigma = load_instance(base, obj)
    if _needs_sigma(obj) and sigma is None:
        raise ValueError(f"{obj.quantity.value} needs --sigma")
    truth = estimators.ground_truth(obj, rho, sigma)
    if truth is None:
        print(f"error: no closed form for {obj.label()} on a non-commuting pair", file=sys.stderr)
        return 1
    print(repr(truth.value))
    return 0


def _cmd_check_gradients(args) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    passed, report = check_gradients(config, seed, corrupt=args.inject_fault)
    for label, entry in report.items():
        counts = sorted({e["q"] + e["p"] for e in entry["ansatze"]})
        status = "ok" if entry["passed"] else "FAIL"
        print(f"{label}: max relative error {entry['max_rel_error']:.3e} over q+p entries {counts} [{status}]")
    if args.out:
        _write_text(Path(args.out) / "gradients.json", _dump_json(report))
    print("gradient check passed" if passed else f"gradient check failed (threshold {GRADIENT_THRESHOLD:g})")
    return 0 if passed else 1


def _default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qne", description="Variational quantum-neural entropy estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides config and QNE_SEED)")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("gen-instance", help="write a random instance")
    common(p, out_required=True)
    p.set_defaults(func=_cmd_gen_instance)

    p = sub.add_parser("experiment", help="run the training protocol")
    common(p, out_required=True)
    p.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes")
    p.add_argument("--layout-seed", type=int, help="redraw the circuit layout from this seed")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("oracle", help="print the closed-form value")
    common(p)
    p.add_argument("--instance", help="directory holding rho.json and sigma.json")
    p.add_argument("--rho")
    p.add_argument("--sigma")
    p.add_argument("--quantity", choices=[q.value for q in Quantity])
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("check-gradients", help="finite-difference gradient check")
    common(p)
    p.add_argument("--inject-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_check_gradients)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QneError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
