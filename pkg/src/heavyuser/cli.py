"""Command-line interface.

Exit codes: 0 on success, 1 on validation errors (bad flags, bad input files,
bad model specs), 2 on computation errors (degenerate arms, failed
replications).  Every random path requires an explicit ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analytic, estimators, harness
from .errors import ComputationError, ValidationError
from .model import BehaviorModel, example_model, simulate as simulate_panel
from .panel import PanelDataset, write_sidecar


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; that code is reserved for computation errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x) -> str:
    return f"{x:.6g}"


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _methods(text: str) -> list[estimators.Method]:
    try:
        return [estimators.Method(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_model_args(p) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--example", type=int, choices=(1, 2),
                   help="preset: uniform activity, effect p, baseline 1, noise 0.01 "
                        "(2 adds a 1/(10 U) novelty boost)")
    g.add_argument("--model-json", type=Path, help="behavior model description (JSON)")


def _load_model(args) -> BehaviorModel:
    if args.example is not None:
        return example_model(args.example)
    try:
        with open(args.model_json, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"--model-json: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"--model-json: invalid JSON: {exc}") from None
    return BehaviorModel.from_dict(d)


def _read_panel(args) -> PanelDataset:
    try:
        return PanelDataset.read_csv(args.input, k=args.k)
    except OSError as exc:
        raise ValidationError(f"{args.input}: {exc}") from None


# -- subcommands -----------------------------------------------------------------


def cmd_simulate(args) -> None:
    model = _load_model(args)
    if args.k < 1 or (args.k < 2 and not args.allow_short):
        raise ValidationError(f"k must be >= 2 for the jackknife (got {args.k}); "
                              "pass --allow-short to simulate shorter panels")
    n_treat = args.n_treat if args.n_treat is not None else args.n
    n_control = args.n_control if args.n_control is not None else args.n
    if n_treat is None or n_control is None:
        raise ValidationError("give --n or both --n-treat and --n-control")
    panel = simulate_panel(model, args.k, n_treat, n_control, args.seed,
                           allow_short=args.allow_short, activity_shift=args.activity_shift)
    panel.to_csv(args.out)
    write_sidecar(args.out, {
        "k": args.k,
        "seed": args.seed,
        "n_treat": n_treat,
        "n_control": n_control,
        "activity_shift": args.activity_shift,
        "model": model.describe(),
    })
    t, c = panel.arms
    print(f"wrote {args.out}: {panel.n_rows} rows, k={args.k}, "
          f"appearing users {t.n_users}/{n_treat} treatment, {c.n_users}/{n_control} control")


def cmd_estimate(args) -> None:
    methods = args.methods
    if estimators.Method.BLOCK_BOOTSTRAP in methods and args.seed is None:
        raise ValidationError("block_bootstrap requires --seed")
    panel = _read_panel(args)
    try:
        report = estimators.check_incrementality(panel, 0.05)
        if not report.passed:
            print(f"warning: active days differ between arms "
                  f"(treatment {_fmt(report.mean_active_days_treat)}, "
                  f"control {_fmt(report.mean_active_days_control)}, p={_fmt(report.p_value)}); "
                  "the treatment may change activity and bias every estimator", file=sys.stderr)
    except ComputationError:
        pass
    results = [
        estimators.estimate(panel, m, replicates=args.replicates, block_len=args.block_len,
                            rng_seed=args.seed,
                            classical_variance=args.classical_jackknife_variance).to_json()
        for m in methods
    ]
    _dump(results)


def cmd_check_incrementality(args) -> None:
    panel = _read_panel(args)
    _dump(estimators.check_incrementality(panel, args.alpha).to_json())


def cmd_analytic(args) -> None:
    model = _load_model(args)
    out = [analytic.analyze(model, k, strict=False).as_dict() for k in args.k]
    _dump(out if len(out) > 1 else out[0])


def cmd_bias_curve(args) -> None:
    model = _load_model(args)
    if args.empirical:
        if args.seed is None:
            raise ValidationError("--empirical requires --seed")
        cfg = harness.ExperimentConfig(model, max(args.k_values), args.n, args.n, args.reps,
                                       args.seed)
        rows = harness.bias_vs_duration(cfg, args.k_values, workers=args.workers)
        writer = harness.write_duration_csv
    else:
        rows = analytic.bias_curve(model, args.k_values)
        writer = analytic.write_bias_csv
    if args.out is None:
        writer(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer(rows, fh)
        print(f"wrote {args.out}: {len(rows)} rows")


def cmd_reproduce_table1(args) -> None:
    if args.reps < 2:
        raise ValidationError(f"--reps must be >= 2, got {args.reps}")
    rows, summaries = harness.reproduce_table1(args.reps, args.seed, args.workers, args.config)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        harness.write_table1_csv(rows, fh)
    if args.summary_json is not None:
        with open(args.summary_json, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({name: s.to_dict() for name, s in summaries.items()}, fh, indent=2)
            fh.write("\n")
    print(f"{'method':<16} {'example':>7} {'mean_bias':>11} {'std_error':>11}")
    for method, example, bias, se in rows:
        print(f"{method:<16} {example:>7} {_fmt(bias):>11} {_fmt(se):>11}")
    print(f"wrote {args.out}")


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="heavyuser",
                     description="Heavy-user bias analysis for fixed-duration A/B tests.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a panel CSV")
    _add_model_args(p)
    p.add_argument("--k", type=int, required=True, help="experiment duration in days")
    p.add_argument("--n", type=int, help="users per arm")
    p.add_argument("--n-treat", type=int)
    p.add_argument("--n-control", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--allow-short", action="store_true", help="permit k = 1")
    p.add_argument("--activity-shift", type=float, default=0.0,
                   help="add to treated users' p (breaks incrementality; for testing the check)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the treatment effect from a panel CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--methods", type=_methods, default=[estimators.Method.NAIVE,
                                                        estimators.Method.JACKKNIFE],
                   help="comma-separated subset of naive,jackknife,block_bootstrap")
    p.add_argument("--replicates", type=int, default=estimators.DEFAULT_REPLICATES)
    p.add_argument("--block-len", type=int, default=estimators.DEFAULT_BLOCK_LEN)
    p.add_argument("--seed", type=int, help="required for block_bootstrap")
    p.add_argument("--classical-jackknife-variance", action="store_true",
                   help="use the (k-1)/k variance factor instead of k/(k-1)")
    p.add_argument("--k", type=int, help="duration (default: sidecar JSON, else max day)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("check-incrementality",
                       help="Welch t-test of active days per user across arms")
    p.add_argument("input", type=Path)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_check_incrementality)

    p = sub.add_parser("analytic", help="closed-form bias for a model")
    _add_model_args(p)
    p.add_argument("--k", type=_int_list, required=True, help="duration(s), comma-separated")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("bias-curve", help="bias against duration, as CSV")
    _add_model_args(p)
    p.add_argument("--k-values", type=_int_list, default=[7, 14, 28])
    p.add_argument("--out", type=Path)
    p.add_argument("--empirical", action="store_true",
                   help="add Monte Carlo naive/jackknife columns")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n", type=int, default=1000, help="users per arm (empirical)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=harness.default_workers())
    p.set_defaults(func=cmd_bias_curve)

    p = sub.add_parser("reproduce-table1", help="rerun both simulated examples")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=harness.default_workers())
    p.add_argument("--config", type=Path, help="override the bundled example definitions")
    p.add_argument("--summary-json", type=Path)
    p.set_defaults(func=cmd_reproduce_table1)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
