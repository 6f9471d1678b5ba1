"""Command-line interface: gen-data, train, encode, solve, experiment, report.

Every stage is a pure function of (config, seed), so each subcommand can
regenerate its prerequisites deterministically instead of threading files
between stages.  Exit codes: 0 success, 2 configuration error, 3 when some
per-seed pipeline failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cases import get_case
from .experiment import (ConfigError, ExperimentConfig, ReportBundle, RunRecord,
                         emit_reports, parse_config_file, run_experiment, run_one,
                         _encode_for, _train_for)
from .milp import write_lp
from .solver import SolverOptions, solve_milp
from .training import mse_loss

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SEED_FAILURES = 3


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def _cmd_gen_data(cfg: ExperimentConfig) -> int:
    case = get_case(cfg.case)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        data = case.make_dataset(cfg.samples, cfg.noise_snr_db, seed)
        path = out / f"{cfg.case}_seed{seed}.csv"
        data.save(path)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_train(cfg: ExperimentConfig) -> int:
    case = get_case(cfg.case)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for seed in cfg.seeds:
        data = case.make_dataset(cfg.samples, cfg.noise_snr_db, seed)
        try:
            result = _train_for(cfg, case, data, seed)
        except Exception as exc:
            print(f"seed {seed}: training failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        result.params.save(out / f"params_seed{seed}.txt")
        result.trace.save(out / f"trace_seed{seed}.csv")
        print(f"seed {seed}: train mse {mse_loss(result.params, data, 'train'):.6e} "
              f"test mse {mse_loss(result.params, data, 'test'):.6e}")
    return EXIT_SEED_FAILURES if failures else EXIT_OK


def _cmd_encode(cfg: ExperimentConfig) -> int:
    case = get_case(cfg.case)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for seed in cfg.seeds:
        data = case.make_dataset(cfg.samples, cfg.noise_snr_db, seed)
        try:
            result = _train_for(cfg, case, data, seed)
            model = _encode_for(cfg, result.params, case.query(data))
        except Exception as exc:
            print(f"seed {seed}: encoding failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        path = out / f"model_seed{seed}.lp"
        path.write_text(write_lp(model))
        print(f"wrote {path} ({model.n_variables} variables, "
              f"{model.n_constraints} constraints)")
    return EXIT_SEED_FAILURES if failures else EXIT_OK


def _cmd_solve(cfg: ExperimentConfig) -> int:
    case = get_case(cfg.case)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for seed in cfg.seeds:
        data = case.make_dataset(cfg.samples, cfg.noise_snr_db, seed)
        try:
            result = _train_for(cfg, case, data, seed)
            model = _encode_for(cfg, result.params, case.query(data))
            sol = solve_milp(model, SolverOptions(gap_limit=cfg.gap_limit,
                                                  node_limit=cfg.node_limit,
                                                  time_limit=cfg.time_limit))
        except Exception as exc:
            print(f"seed {seed}: solve failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        path = out / f"solution_seed{seed}.json"
        path.write_text(json.dumps(
            {"status": sol.status, "objective": sol.objective, "gap": sol.gap,
             "node_count": sol.node_count, "assignment": sol.assignment},
            indent=1, sort_keys=True) + "\n")
        print(f"seed {seed}: {sol.status} objective {sol.objective} "
              f"({sol.node_count} nodes)")
    return EXIT_SEED_FAILURES if failures else EXIT_OK


def _cmd_experiment(cfg: ExperimentConfig) -> int:
    bundle = run_experiment(cfg)
    paths = emit_reports(bundle)
    for p in paths:
        print(f"wrote {p}")
    agg = bundle.aggregate()
    print(f"feasible {agg['feasible_runs']}/{agg['n_seeds']} "
          f"mean deviation {agg['mean_deviation_ratio']} mean sse {agg['mean_sse']}")
    if any(r.error for r in bundle.runs):
        return EXIT_SEED_FAILURES
    return EXIT_OK


def _cmd_report(args) -> int:
    payload = json.loads(Path(args.config).read_text())
    cfg = ExperimentConfig(**{k: tuple(v) if k == "seeds" else v
                              for k, v in payload["config"].items()})
    runs = [RunRecord(**r) for r in payload["runs"]]
    bundle = ReportBundle(cfg, runs, payload["oracle_inputs_raw"],
                          payload["oracle_objective_raw"])
    out_dir = args.out if args.out else cfg.out_dir
    for p in emit_reports(bundle, out_dir):
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwlopt",
        description="Train physics-informed network surrogates and optimize "
                    "them as piecewise-linear MILPs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("gen-data", "generate and save the case dataset(s)"),
            ("train", "train the network(s) and save parameters and traces"),
            ("encode", "train, then export the optimization model(s) as .lp"),
            ("solve", "train, encode, and solve; save solution JSON"),
            ("experiment", "full pipeline over all seeds, with reports"),
            ("report", "re-emit report files from a saved bundle.json")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path,
                       help="flat key = value config file"
                            + (" (bundle.json for 'report')" if name == "report" else ""))
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed list with one seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            if not args.config:
                raise ConfigError("report needs --config pointing at a bundle.json")
            return _cmd_report(args)
        cfg = _load_config(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"gen-data": _cmd_gen_data, "train": _cmd_train, "encode": _cmd_encode,
               "solve": _cmd_solve, "experiment": _cmd_experiment}[args.command]
    return handler(cfg)


if __name__ == "__main__":
    sys.exit(main())
