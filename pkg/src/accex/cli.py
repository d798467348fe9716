"""Command-line interface: ``accex <subcommand> ...``."""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from dataclasses import replace

import numpy as np

from . import cleanex
from .baselines import KdeConfig, RegressionModel, default_n_bases, kde_extrapolate, regression_extrapolate, regression_fit
from .curves import AccuracyCurve, brute_force_accuracy, compute_rank_stats, observed_accuracy_curve
from .harness import ExperimentReport, load_config, run_experiment
from .rroc import default_grid, discriminability, reversed_auc, rroc_average
from .score_model import ScoreOrientation, load_scores, write_scores
from .simulation import ClassDist, PointDist, SimulationConfig, generate

PRECISIONS = {"float32": np.float32, "float64": np.float64}


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def _emit_curve(curve: AccuracyCurve, out) -> None:
    with _open_out(out) as fh:
        fh.write("k,accuracy\n")
        for k, v in zip(curve.ks.tolist(), curve.values.tolist()):
            fh.write(f"{k},{v!r}\n")
    if curve.clamp_count:
        print(f"clamped {curve.clamp_count} values into [0,1] / nonincreasing", file=sys.stderr)


def _load(args):
    return load_scores(args.scores, ScoreOrientation(args.orientation))


def cmd_curve(args) -> int:
    m = _load(args)
    k_max = args.k_max or m.n_classes
    if args.oracle:
        values = [brute_force_accuracy(m, k) for k in range(2, k_max + 1)]
        curve = AccuracyCurve(values, "oracle")
    else:
        curve = observed_accuracy_curve(compute_rank_stats(m), m.n_classes, m.r, k_max)
    _emit_curve(curve, args.out)
    return 0


def cmd_rroc(args) -> int:
    stats = compute_rank_stats(_load(args))
    grid = default_grid(args.grid_size)
    curve = rroc_average(stats, grid)
    d = discriminability(stats, grid)
    with _open_out(args.out) as fh:
        fh.write("u,rroc_avg,discriminability\n")
        for u, a, b in zip(grid.tolist(), curve.values.tolist(), d.tolist()):
            fh.write(f"{u!r},{a!r},{b!r}\n")
    print(f"rAUC={reversed_auc(stats)!r}", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    m = _load(args)
    if args.method == "cleanex":
        model, trace, chat = cleanex.fit(
            m,
            iters=args.iters,
            lr=args.lr,
            seed=args.seed,
            k_stride=args.k_stride,
            dtype=PRECISIONS[args.precision],
        )
        print(f"final loss {trace.final_loss:.3e} after {args.iters} iterations", file=sys.stderr)
        if args.model:
            cleanex.save_model(model, args.model)
        if args.k2:
            _emit_curve(cleanex.extrapolate(chat, args.k2), args.out)
        return 0

    k2 = args.k2 or m.n_classes
    if args.method == "kde":
        curve = kde_extrapolate(m, KdeConfig(grid_size=args.kde_grid), k2)
    else:
        observed = observed_accuracy_curve(compute_rank_stats(m), m.n_classes, m.r, m.n_classes)
        n_bases = args.bases or default_n_bases(m.n_classes)
        curve = regression_extrapolate(regression_fit(observed, RegressionModel(n_bases, args.ridge)), k2)
    _emit_curve(curve, args.out)
    return 0


def cmd_extrapolate(args) -> int:
    model = cleanex.load_model(args.model)
    _emit_curve(cleanex.predict(model, _load(args), args.k2), args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = SimulationConfig(
        d=args.d,
        n_classes=args.classes,
        r=args.r,
        sigma2=args.sigma2,
        class_dist=ClassDist(args.class_dist),
        point_dist=PointDist(args.point_dist),
        seed=args.seed,
    )
    write_scores(generate(cfg), args.out)
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    report: ExperimentReport = run_experiment(cfg)
    for method, s in report.summary.items():
        if s["all_failed"]:
            print(f"{method}: all {s['n_failed']} repetitions failed", file=sys.stderr)
        else:
            print(
                f"{method}: median RMSE {s['median']:.4f} (q1 {s['q1']:.4f}, q3 {s['q3']:.4f}), "
                f"{s['n_failed']} failed",
                file=sys.stderr,
            )
    if cfg.output_dir is None:
        sys.stdout.write(report.to_json())
    return 0 if report.all_succeeded else 1


def _add_scores(p):
    p.add_argument("scores", help="score CSV (point_id,correct_class,<class ids...>)")
    p.add_argument("--orientation", choices=["higher", "lower"], default="higher")
    p.add_argument("--out", help="output CSV (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accex", description="Multiclass accuracy extrapolation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curve", help="exact observed accuracy curve")
    _add_scores(p)
    p.add_argument("--k-max", type=int)
    p.add_argument("--oracle", action="store_true", help="enumerate class subsets instead")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("rroc", help="averaged reversed ROC and discriminability")
    _add_scores(p)
    p.add_argument("--grid-size", type=int, default=513)
    p.set_defaults(func=cmd_rroc)

    p = sub.add_parser("fit", help="fit an estimator on pilot scores")
    _add_scores(p)
    p.add_argument("--method", choices=["cleanex", "kde", "regression"], required=True)
    p.add_argument("--k2", type=int, help="extrapolate to this many classes")
    p.add_argument("--iters", type=int, default=cleanex.ITERS)
    p.add_argument("--lr", type=float, default=cleanex.LEARNING_RATE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-stride", type=int, default=1)
    p.add_argument("--precision", choices=sorted(PRECISIONS), default="float32")
    p.add_argument("--model", help="write the trained CleaneX model here")
    p.add_argument("--kde-grid", type=int, default=32)
    p.add_argument("--bases", type=int)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("extrapolate", help="extrapolate with a saved CleaneX model")
    _add_scores(p)
    p.add_argument("--model", required=True)
    p.add_argument("--k2", type=int, required=True)
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("simulate", help="write a simulated score CSV")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--classes", type=int, default=2000)
    p.add_argument("--r", type=int, default=10)
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--class-dist", choices=[c.value for c in ClassDist], default="gauss")
    p.add_argument("--point-dist", choices=[c.value for c in PointDist], default="gauss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="run a repetition study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError, RuntimeError) as exc:
        print(f"accex {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
