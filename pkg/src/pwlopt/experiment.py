"""Declarative experiment runner: train k seeds, encode, solve, and report.

One config describes one condition (case, architecture, training mode,
encoding); run_experiment executes the full pipeline per seed, replays the
surrogate optimum through the first-principles model, and aggregates
feasible-run counts, deviation ratios against the reference optimum, and
surrogate-vs-first-principles error.  Reports are byte-deterministic for a
fixed config; measured wall times go to a separate timings file.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cases import CaseStudy, get_case, sse_compare
from .encode import encode_pwl_cc, encode_pwl_sos2, encode_relu_bigm
from .milp import write_lp
from .network import IDENTITY, RELU, TANH, forward
from .pwl import tanh_pwl
from .solver import SolverOptions, solve_milp
from .training import (ConstrainedPhaseConfig, TrainingConfig, mse_loss,
                       physics_eval, train, train_constrained)

__all__ = ["ExperimentConfig", "RunRecord", "ReportBundle", "ConfigError",
           "parse_config", "parse_config_file", "run_experiment", "emit_reports"]

ENCODINGS = ("cc", "sos2", "relu_bigm")
MODES = ("pi_minus", "pi_plus", "pi_plus_constrained")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "blending"
    n_samples: int = 0                 # 0 means the case default
    noise_snr_db: float = 40.0
    hidden: int = 5
    activation: str = "tanh"           # hidden-layer activation: tanh | relu
    mode: str = "pi_plus"
    epochs: int = 4000
    learning_rate: float = 1e-3
    physics_weight: float = -1.0       # negative means the case default
    weight_bound: float = 10.0
    encoding: str = "sos2"
    pieces: int = 5
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    gap_limit: float = 1e-8
    node_limit: int = 1_000_000
    time_limit: float = 300.0
    out_dir: str = "out"
    write_lp_files: bool = False
    write_markdown: bool = True
    # two-phase constrained training (mode = pi_plus_constrained)
    mse_bound_factor: float = 2.0      # Z = factor * phase-1 train MSE
    physics_bound_factor: float = 0.5  # U = factor * phase-1 physics value
    outer_iterations: int = 5
    inner_epochs: int = 0              # 0 means same as epochs

    def __post_init__(self):
        get_case(self.case)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"encoding must be one of {ENCODINGS}")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError("activation must be 'tanh' or 'relu'")
        if self.activation == "relu" and self.encoding != "relu_bigm":
            raise ConfigError("relu networks require the relu_bigm encoding")
        if self.activation == "tanh" and self.encoding == "relu_bigm":
            raise ConfigError("the relu_bigm encoding requires a relu network")
        if self.pieces not in (3, 5):
            raise ConfigError("pieces must be 3 or 5")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.hidden < 1 or self.epochs < 0:
            raise ConfigError("hidden and epochs must be positive")

    @property
    def samples(self) -> int:
        return self.n_samples if self.n_samples > 0 else get_case(self.case).default_samples

    def resolved_physics_weight(self) -> float:
        if self.physics_weight >= 0:
            return self.physics_weight
        return get_case(self.case).default_physics_weight()


_BOOL_KEYS = {"write_lp_files", "write_markdown"}


def parse_config(text: str) -> ExperimentConfig:
    """Flat key = value lines; '#' starts a comment; seeds are space-separated."""
    values: dict[str, object] = {}
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown setting {key!r}")
        if key == "seeds":
            values[key] = tuple(int(v) for v in val.replace(",", " ").split())
        elif key in _BOOL_KEYS:
            values[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in ("case", "activation", "mode", "encoding", "out_dir"):
            values[key] = val
        elif key in ("n_samples", "hidden", "epochs", "pieces", "node_limit",
                     "outer_iterations", "inner_epochs"):
            values[key] = int(val)
        else:
            values[key] = float(val)
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_file(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


@dataclass
class RunRecord:
    seed: int
    train_mse: float = math.nan
    test_mse: float = math.nan
    solve_status: str = ""
    node_count: int = 0
    feasible: bool = False
    inputs_raw: list[float] = field(default_factory=list)
    outputs_surrogate_raw: list[float] = field(default_factory=list)
    outputs_first_principles_raw: list[float] = field(default_factory=list)
    objective_surrogate_raw: float = math.nan
    objective_first_principles_raw: float = math.nan
    sse_normalized: float = math.nan
    deviation_ratio: float = math.nan
    training_feasible: bool = True
    error: str = ""
    train_seconds: float = 0.0
    solve_seconds: float = 0.0
    lp_text: str = ""


@dataclass
class ReportBundle:
    config: ExperimentConfig
    runs: list[RunRecord]
    oracle_inputs_raw: list[float]
    oracle_objective_raw: float

    @property
    def feasible_runs(self) -> int:
        return sum(1 for r in self.runs if r.feasible)

    def aggregate(self) -> dict[str, object]:
        feas = [r for r in self.runs if r.feasible]
        dev = [r.deviation_ratio for r in feas]
        sse = [r.sse_normalized for r in feas]
        return {
            "case": self.config.case,
            "hidden": self.config.hidden,
            "mode": self.config.mode,
            "activation": self.config.activation,
            "output_activation": _output_activation(self.config).token,
            "encoding": self.config.encoding,
            "pieces": self.config.pieces,
            "n_seeds": len(self.runs),
            "feasible_runs": self.feasible_runs,
            "mean_deviation_ratio": float(np.mean(dev)) if dev else math.nan,
            "median_deviation_ratio": float(np.median(dev)) if dev else math.nan,
            "mean_sse": float(np.mean(sse)) if sse else math.nan,
        }


def _output_activation(config: ExperimentConfig):
    return IDENTITY if config.activation == "relu" else TANH


def _train_for(config: ExperimentConfig, case: CaseStudy, data, seed: int):
    hidden_act = RELU if config.activation == "relu" else TANH
    tcfg = TrainingConfig(
        epochs=config.epochs, learning_rate=config.learning_rate, seed=seed,
        weight_bounds=(-config.weight_bound, config.weight_bound),
        physics_weight=config.resolved_physics_weight(),
        mode="pi_minus" if config.mode == "pi_minus" else "pi_plus")
    term = case.physics_term()
    if config.mode == "pi_plus_constrained":
        phase1 = TrainingConfig(
            epochs=config.epochs, learning_rate=config.learning_rate, seed=seed,
            weight_bounds=(-config.weight_bound, config.weight_bound),
            physics_weight=config.resolved_physics_weight(), mode="pi_minus")
        warm = train(phase1, data, term=term, n_hidden=config.hidden,
                     hidden_activation=hidden_act,
                     output_activation=_output_activation(config))
        z_bound = config.mse_bound_factor * mse_loss(warm.params, data, "train")
        u_bound = config.physics_bound_factor * physics_eval(term, warm.params, data, "train")
        p2 = ConstrainedPhaseConfig(
            mse_upper_bound=z_bound, physics_upper_bound=u_bound,
            max_outer_iterations=config.outer_iterations,
            inner_epochs=config.inner_epochs or None)
        return train_constrained(phase1, p2, data, term, n_hidden=config.hidden,
                                 hidden_activation=hidden_act,
                                 output_activation=_output_activation(config))
    mode_term = term if config.mode == "pi_plus" else None
    return train(tcfg, data, term=mode_term, n_hidden=config.hidden,
                 hidden_activation=hidden_act,
                 output_activation=_output_activation(config))


def _encode_for(config: ExperimentConfig, params, query):
    if config.encoding == "relu_bigm":
        return encode_relu_bigm(params, query)
    pwl = tanh_pwl(config.pieces)
    if config.encoding == "cc":
        return encode_pwl_cc(params, pwl, query)
    return encode_pwl_sos2(params, pwl, query)


def run_one(config: ExperimentConfig, seed: int) -> RunRecord:
    """The per-seed pipeline: data -> train -> encode -> solve -> replay."""
    case = get_case(config.case)
    rec = RunRecord(seed=seed)
    data = case.make_dataset(config.samples, config.noise_snr_db, seed)

    t0 = time.perf_counter()
    result = _train_for(config, case, data, seed)
    rec.train_seconds = time.perf_counter() - t0
    rec.training_feasible = result.feasible
    params = result.params
    rec.train_mse = mse_loss(params, data, "train")
    rec.test_mse = mse_loss(params, data, "test")

    query = case.query(data)
    model = _encode_for(config, params, query)
    if config.write_lp_files:
        rec.lp_text = write_lp(model)

    opts = SolverOptions(gap_limit=config.gap_limit, node_limit=config.node_limit,
                         time_limit=config.time_limit)
    t0 = time.perf_counter()
    sol = solve_milp(model, opts)
    rec.solve_seconds = time.perf_counter() - t0
    rec.solve_status = sol.status
    rec.node_count = sol.node_count
    if sol.status not in ("optimal", "gap_limit") or sol.assignment is None:
        return rec

    u_norm = np.array([sol.assignment[f"u{j + 1}"] for j in range(case.n_inputs)])
    u_raw = data.raw_inputs(u_norm)
    rec.inputs_raw = [float(v) for v in u_raw]

    surr_params = params.as_pwl(config.pieces) if config.activation == "tanh" else params
    y_surr_norm = forward(surr_params, u_norm)
    y_surr_raw = data.raw_outputs(y_surr_norm)
    rec.outputs_surrogate_raw = [float(v) for v in y_surr_raw]
    rec.objective_surrogate_raw = float(y_surr_raw[case.objective_output])

    if not case.feasible(u_raw):
        return rec
    y_fp_raw = case.first_principles(u_raw)
    rec.feasible = True
    rec.outputs_first_principles_raw = [float(v) for v in y_fp_raw]
    rec.objective_first_principles_raw = float(y_fp_raw[case.objective_output])
    y_fp_norm = data.output_scaler.to_normalized(y_fp_raw)
    rec.sse_normalized = sse_compare(y_fp_norm, y_surr_norm)
    oracle = case.oracle(data)
    rec.deviation_ratio = float(
        (rec.objective_first_principles_raw - oracle.objective_raw)
        / abs(oracle.objective_raw))
    return rec


def run_experiment(config: ExperimentConfig) -> ReportBundle:
    case = get_case(config.case)
    data0 = case.make_dataset(config.samples, config.noise_snr_db, config.seeds[0])
    oracle = case.oracle(data0)
    runs = []
    for seed in config.seeds:
        try:
            rec = run_one(config, seed)
        except Exception as exc:  # per-seed failures are recorded, not fatal
            rec = RunRecord(seed=seed, error=f"{type(exc).__name__}: {exc}")
        runs.append(rec)
    return ReportBundle(config, runs, [float(v) for v in oracle.inputs_raw],
                        float(oracle.objective_raw))


# -- report files -------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def emit_reports(bundle: ReportBundle, out_dir=None) -> list[Path]:
    """Write runs.csv, aggregate.csv, bundle.json, timings.csv, and optional
    markdown and .lp files; returns the written paths."""
    config = bundle.config
    case = get_case(config.case)
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    in_names = list(case.input_names)
    out_names = list(case.output_names)

    runs_path = out / "runs.csv"
    header = (["case", "mode", "encoding", "pieces", "hidden", "output_activation",
               "seed", "train_mse", "test_mse", "solve_status", "node_count",
               "feasible", "training_feasible", "sse_normalized", "deviation_ratio",
               "objective_surrogate_raw", "objective_first_principles_raw"]
              + [f"in_{n}" for n in in_names]
              + [f"surr_{n}" for n in out_names]
              + [f"fp_{n}" for n in out_names] + ["error"])
    lines = [",".join(header)]
    for r in bundle.runs:
        row = [config.case, config.mode, config.encoding, str(config.pieces),
               str(config.hidden), _output_activation(config).token, str(r.seed),
               _fmt(r.train_mse), _fmt(r.test_mse), r.solve_status, str(r.node_count),
               str(int(r.feasible)), str(int(r.training_feasible)),
               _fmt(r.sse_normalized), _fmt(r.deviation_ratio),
               _fmt(r.objective_surrogate_raw), _fmt(r.objective_first_principles_raw)]
        row += [_fmt(v) for v in (r.inputs_raw or [math.nan] * len(in_names))]
        row += [_fmt(v) for v in (r.outputs_surrogate_raw or [math.nan] * len(out_names))]
        row += [_fmt(v) for v in (r.outputs_first_principles_raw or [math.nan] * len(out_names))]
        row.append(r.error.replace(",", ";"))
        lines.append(",".join(row))
    runs_path.write_text("\n".join(lines) + "\n")
    written.append(runs_path)

    agg = bundle.aggregate()
    agg_path = out / "aggregate.csv"
    agg_path.write_text(",".join(agg.keys()) + "\n"
                        + ",".join(_fmt(v) for v in agg.values()) + "\n")
    written.append(agg_path)

    bundle_path = out / "bundle.json"
    payload = {
        "config": asdict(config),
        "oracle_inputs_raw": bundle.oracle_inputs_raw,
        "oracle_objective_raw": bundle.oracle_objective_raw,
        "aggregate": agg,
        "runs": [{k: v for k, v in asdict(r).items()
                  if k not in ("train_seconds", "solve_seconds", "lp_text")}
                 for r in bundle.runs],
    }
    bundle_path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    written.append(bundle_path)

    timings_path = out / "timings.csv"
    tlines = ["seed,train_seconds,solve_seconds"]
    tlines += [f"{r.seed},{r.train_seconds:.3f},{r.solve_seconds:.3f}" for r in bundle.runs]
    timings_path.write_text("\n".join(tlines) + "\n")
    written.append(timings_path)

    if config.write_lp_files:
        for r in bundle.runs:
            if r.lp_text:
                p = out / f"model_seed{r.seed}.lp"
                p.write_text(r.lp_text)
                written.append(p)

    if config.write_markdown:
        md = [f"# Experiment report: {config.case}", "",
              f"- mode: {config.mode}, encoding: {config.encoding}, "
              f"pieces: {config.pieces}, hidden: {config.hidden}",
              f"- seeds: {list(config.seeds)}",
              f"- reference optimum (first principles): "
              f"{bundle.oracle_objective_raw!r} at inputs "
              f"{[round(v, 6) for v in bundle.oracle_inputs_raw]}", "",
              "| seed | train mse | test mse | status | feasible | deviation | sse |",
              "|-----:|----------:|---------:|--------|---------:|----------:|----:|"]
        for r in bundle.runs:
            md.append(f"| {r.seed} | {r.train_mse:.3e} | {r.test_mse:.3e} "
                      f"| {r.solve_status or 'failed'} | {int(r.feasible)} "
                      f"| {r.deviation_ratio:.4f} | {r.sse_normalized:.3e} |")
        a = bundle.aggregate()
        md += ["", f"Feasible runs: {a['feasible_runs']}/{a['n_seeds']}; "
               f"mean deviation {a['mean_deviation_ratio']:.4f}; "
               f"mean SSE {a['mean_sse']:.3e}", ""]
        md_path = out / "summary.md"
        md_path.write_text("\n".join(md))
        written.append(md_path)
    return written
