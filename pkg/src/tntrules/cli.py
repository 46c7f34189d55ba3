"""Command-line entry point.

Exit codes: 0 success, 2 bad configuration, 3 numerical failure,
4 an expectation given to ``eval`` was violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import operator
import sys
from pathlib import Path

import numpy as np

from .bayes_opt import BOError, BOTrace, run_bo
from .clustering import ClusteringError
from .dataset import ExplanationDataset
from .evaluation import reports_to_csv, run_clustering_ablation, run_gp_mode, run_gt_mode, summary_table
from .gp import GPFitError
from .problems import PROBLEMS, ConfigError, get_problem, load_config
from .report import PipelineError, render_svg, run_pipeline
from .rules import RuleSet
from .tuning import TuningContext, nsga2_tune, scalar_tune

logger = logging.getLogger("tntrules")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4
_NUMERIC = (GPFitError, ClusteringError, BOError, FloatingPointError, np.linalg.LinAlgError)
_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt, "==": operator.eq}


def _common(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="key = value configuration file")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--out-dir", default=argparse.SUPPRESS if suppress else ".")
    parser.add_argument("--problem", choices=sorted(PROBLEMS), default=default)
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tntrules", description="Rule explanations for Bayesian optimization.")
    _common(parser, suppress=False)
    shared = argparse.ArgumentParser(add_help=False)
    _common(shared, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", parents=[shared], help="run Bayesian optimization, write trace.json")
    p.add_argument("--iters", type=int)
    p.add_argument("--out", help="trace path (default OUT_DIR/trace.json)")

    p = sub.add_parser("explain", parents=[shared], help="explain a trace: dataset, linkage, rules")
    p.add_argument("--trace", help="trace.json from 'optimize'; optimizes first when omitted")
    p.add_argument("--t-s", type=float, dest="t_s")
    p.add_argument("--n-explain", type=int, dest="n_explain")

    p = sub.add_parser("tune-ts", parents=[shared], help="tune the variance threshold")
    p.add_argument("--trace")
    p.add_argument("--mode", choices=("pareto", "scalar"), default="pareto")
    p.add_argument("--generations", type=int, default=25)
    p.add_argument("--pop", type=int, default=20)

    p = sub.add_parser("eval", parents=[shared], help="3-Cs over seeds, GP and ground-truth modes")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at --seed")
    p.add_argument("--modes", default="gp,gt")
    p.add_argument("--expect", help="file of 'mode:metric op value' lines checked on seed means")

    p = sub.add_parser("ablate", parents=[shared], help="clustering configuration grid")
    p.add_argument("--trace")
    p.add_argument("--full", action="store_true", help="all 28 configurations instead of 16")

    p = sub.add_parser("plot", parents=[shared], help="SVG of a rules file over a dataset file")
    p.add_argument("--rules", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")

    p = sub.add_parser("report", parents=[shared], help="full pipeline with every artifact")
    p.add_argument("--trace")
    p.add_argument("--mode", choices=("fixed", "scalar-tune", "pareto-tune"), default="fixed")
    return parser


def _config(args, **extra):
    return load_config(args.config, problem=getattr(args, "problem", None), seed=getattr(args, "seed", None), **extra)


def _trace(args, config):
    if getattr(args, "trace", None):
        return BOTrace.load(args.trace)
    return run_bo(get_problem(config.problem), config.bo_iterations, seed=config.seed)


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_optimize(args) -> int:
    config = _config(args, bo_iterations=args.iters)
    trace = run_bo(get_problem(config.problem), config.bo_iterations, seed=config.seed)
    path = Path(args.out) if args.out else _out(args) / "trace.json"
    trace.save(path)
    print(f"f_opt = {trace.f_opt:.6g} at x_opt = {np.array2string(trace.x_opt, precision=5)}; wrote {path}")
    return EXIT_OK


def cmd_explain(args) -> int:
    from .evaluation import estimator_from_config

    config = _config(args, t_s=args.t_s, n_explain=args.n_explain)
    obj = get_problem(config.problem)
    trace = _trace(args, config)
    est = estimator_from_config(config, obj, surrogate=trace.model).fit(trace.X, trace.y)
    out = _out(args)
    est.dataset_.to_csv(out / "dataset.csv")
    est.tree_.to_csv(out / "linkage.csv")
    (out / "rules.json").write_text(est.rules_.to_json(indent=2, sort_keys=True))
    (out / "rules.txt").write_text(est.rules_.to_text() + "\n")
    print(est.rules_.to_text() or "(no rules above the interestingness threshold)")
    return EXIT_OK


def cmd_tune(args) -> int:
    from .evaluation import estimator_from_config

    config = _config(args)
    obj = get_problem(config.problem)
    trace = _trace(args, config)
    est = estimator_from_config(config, obj, surrogate=trace.model).fit(trace.X, trace.y)
    ctx = TuningContext.from_estimator(est)
    out = _out(args)
    if args.mode == "scalar":
        t_s, scores = scalar_tune(ctx)
        rows = [{"t_s": float(t), "mean_alpha": float(s)} for t, s in zip(np.linspace(0, 1, scores.size), scores)]
    else:
        front, chosen = nsga2_tune(ctx, args.generations, args.pop, config.seed)
        t_s, rows = chosen.t_s, front.to_rows()
    (out / "ts_front.csv").write_text(reports_to_csv(rows))
    print(f"chosen t_s = {t_s:.6g}")
    return EXIT_OK


def _check_expectations(path, reports) -> list:
    failures = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[1] not in _OPS:
            raise ConfigError(f"{path}:{lineno}: expected 'mode:metric op value'")
        key, op, value = parts
        mode, _, metric = key.rpartition(":")
        chosen = [r for r in reports if not mode or r.mode.startswith(mode)]
        if not chosen or not hasattr(chosen[0], metric):
            raise ConfigError(f"{path}:{lineno}: no reports with metric {key!r}")
        mean = float(np.nanmean([getattr(r, metric) for r in chosen]))
        if not _OPS[op](mean, float(value)):
            failures.append(f"{key} = {mean:.4g} violates {op} {value}")
    return failures


def cmd_eval(args) -> int:
    modes = {m.strip() for m in args.modes.split(",") if m.strip()}
    if not modes <= {"gp", "gt"}:
        raise ConfigError("--modes takes a comma list of 'gp' and 'gt'")
    base = _config(args)
    obj = get_problem(base.problem)
    reports = []
    for k in range(args.seeds):
        config = load_config(args.config, problem=base.problem, seed=base.seed + k)
        if "gt" in modes and obj.cheap:
            reports.append(run_gt_mode(obj, config)[0])
        if "gp" in modes:
            reports.append(run_gp_mode(obj, config)[0])
    out = _out(args)
    (out / "report.csv").write_text(reports_to_csv(reports))
    table = summary_table(reports)
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    if args.expect:
        failures = _check_expectations(args.expect, reports)
        for f in failures:
            print(f"VIOLATED: {f}")
        if failures:
            return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = load_config(args.config, problem=getattr(args, "problem", None) or "himmelblau",
                         seed=getattr(args, "seed", None))
    trace = BOTrace.load(args.trace) if args.trace else None
    grid = run_clustering_ablation(config.problem, config, trace, full=args.full)
    out = _out(args)
    (out / "ablation.csv").write_text(grid.to_csv())
    for r in grid.rows:
        status = r.failed or f"initial {r.n_initial:3d}  high {r.n_high:2d}  hits {r.minima_hit}"
        print(f"{r.name:<28} {status}")
    return EXIT_OK


def cmd_plot(args) -> int:
    config = _config(args)
    obj = get_problem(config.problem)
    rules = RuleSet.from_json(Path(args.rules).read_text())
    data = ExplanationDataset.from_csv(args.dataset, obj.space)
    path = Path(args.out) if args.out else _out(args) / "plot.svg"
    path.write_text(render_svg(rules, data, obj.known_minima))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    config = _config(args)
    trace = BOTrace.load(args.trace) if args.trace else None
    manifest = run_pipeline(config, _out(args), args.mode, trace)
    stats = manifest.stats
    print(f"{stats['n_rules']} of {stats['n_rules_all']} rules retained; fidelity {stats['fidelity']:.3f}; "
          f"union volume {100 * stats['volume_union_fraction']:.1f}% of the space")
    print((Path(args.out_dir) / "rules.txt").read_text(), end="")
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "explain": cmd_explain, "tune-ts": cmd_tune, "eval": cmd_eval,
            "ablate": cmd_ablate, "plot": cmd_plot, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_NUMERIC if isinstance(exc.cause, _NUMERIC) else 1
    except _NUMERIC as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
