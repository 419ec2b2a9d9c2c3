"""Command-line entry point: ``lldg <command> [options]``.

Every training command accepts ``--config FILE`` (``key = value`` lines) and
``--set key=value`` overrides, plus a few common shortcuts. Outputs go to
``--output-dir`` (default ``$LLDG_OUTPUT_DIR`` or ``./runs``).
"""
import argparse
import json
import sys

from . import __version__
from .data import DatasetFormatError
from .experiment import (
    DEFAULT_NOISE_STDS,
    RunConfig,
    evaluate_checkpoint,
    grid_report,
    read_config_file,
    run_ablation,
    run_noise_sweep,
    run_train,
    tucker_demo,
)
from .metrics import METRICS
from .nn import TrainingError

# flag -> RunConfig field
_SHORTCUTS = {
    "seed": "seed",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "lr",
    "weight_decay": "weight_decay",
    "lam": "lam",
    "tucker_ranks": "tucker_ranks",
    "hooi_sweeps": "hooi_sweeps",
    "variance_mode": "variance_mode",
    "noise_std": "noise_std",
    "patience": "patience",
    "output_dir": "output_dir",
    "run_name": "run_name",
}


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _add_run_options(p, with_dataset=True):
    if with_dataset:
        p.add_argument("dataset", nargs="?", help="dataset file, or a name looked up in $LLDG_DATA_DIR")
        p.add_argument("--dataset", dest="dataset_opt", metavar="DATASET", help="same as the positional argument")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--lambda", dest="lam", type=float, help="grid-loss weight")
    p.add_argument("--tucker-ranks", help="auto, full, R or R1,R2,R3")
    p.add_argument("--hooi-sweeps", type=int)
    p.add_argument("--variance-mode", choices=["variance", "std"])
    p.add_argument("--noise-std", type=float)
    p.add_argument("--patience", type=int, help="early-stop patience in epochs (0 disables)")
    p.add_argument("--disable-grid-loss", action="store_true", default=None)
    p.add_argument("--disable-tucker", action="store_true", default=None)
    p.add_argument("--output-dir")
    p.add_argument("--run-name")
    p.add_argument("--quiet", action="store_true")


def build_config(args):
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for flag, key in _SHORTCUTS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    for key in ("disable_grid_loss", "disable_tucker"):
        if getattr(args, key, None):
            values[key] = True
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip().replace("-", "_")] = v.strip()
    for attr in ("dataset_opt", "dataset"):
        if getattr(args, attr, None):
            values["dataset"] = getattr(args, attr)
    if not values.get("dataset"):
        raise ValueError("no dataset given")
    return RunConfig.from_mapping(values)


def _progress(args):
    if args.quiet:
        return None

    def log(rec):
        extra = f"  val={rec['val_total']:.6f}" if "val_total" in rec else ""
        print(f"epoch {rec['epoch']:4d}  loss={rec['total']:.6f}{extra}  ({rec['wall_clock']:.2f}s)", file=sys.stderr)

    return log


def cmd_train(args):
    cfg = build_config(args)
    result = run_train(cfg, log=_progress(args))
    print(result.report.format_row())
    print(f"results written to {result.run_dir}")


def cmd_evaluate(args):
    report = evaluate_checkpoint(args.checkpoint, args.dataset, args.split)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        for name in METRICS:
            print(f"{name:<14}{report.mean[name]:.4f} ± {report.std[name]:.4f}")


def cmd_noise_sweep(args):
    cfg = build_config(args)
    results = run_noise_sweep(cfg, stds=args.stds, log=_progress(args))
    for std, r in results:
        print(f"std={std:<6g} {r.report.format_row()}")


def cmd_ablation(args):
    cfg = build_config(args)
    out = run_ablation(cfg, seeds=args.seeds, arms=args.arms, log=_progress(args))
    for arm, results in out.items():
        mean = sum(r.report.mean["chebyshev"] for r in results) / len(results)
        print(f"{arm:<10} mean chebyshev over {len(results)} seeds: {mean:.4f}")


def cmd_grid_report(args):
    summary, records = grid_report(args.checkpoint, args.dataset, args.split, args.limit)
    if args.output:
        with open(args.output, "w") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_tucker_demo(args):
    rows = tucker_demo(tuple(args.dims), tuple(args.ranks), args.seed, args.trials, args.separable)
    for r in rows:
        flag = "ok" if r["within_bound"] else "EXCEEDS BOUND"
        print(
            f"trial {r['trial']}: dims={r['dims']} ranks={r['ranks']} error={r['error']:.3e} "
            f"(relative {r['relative_error']:.3e}) bound={r['bound']:.3e} {flag}"
        )
    return 0 if all(r["within_bound"] for r in rows) else 1


def _triple(text):
    vals = _int_list(text)
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected N or N1,N2,N3")
    return vals


def make_parser():
    parser = argparse.ArgumentParser(prog="lldg", description="Latent label distribution grid toolkit.")
    parser.add_argument("--version", action="version", version=f"lldg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate on an 8:2 split")
    _add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--dataset", help="defaults to the dataset recorded in the checkpoint")
    p.add_argument("--split", choices=["test", "train", "all"], default="test")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("noise-sweep", help="train at several label-noise levels")
    _add_run_options(p)
    p.add_argument("--stds", type=_float_list, default=list(DEFAULT_NOISE_STDS))
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("ablation", help="full model against its ablated variants over seeds")
    _add_run_options(p)
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5])
    p.add_argument("--arms", type=lambda s: s.split(","), default=["full", "no-lldg", "no-tucker"])
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("grid-report", help="energy summary of a trained model's grids")
    p.add_argument("checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--split", choices=["test", "train", "all"], default="test")
    p.add_argument("--limit", type=int)
    p.add_argument("--output", help="write per-sample records as JSON lines")
    p.set_defaults(func=cmd_grid_report)

    p = sub.add_parser("tucker-demo", help="decompose random tensors and check the truncation bound")
    p.add_argument("--dims", type=_triple, default=[6, 6, 6])
    p.add_argument("--ranks", type=_triple, default=[3, 3, 3])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--separable", action="store_true", help="use a rank-1 tensor")
    p.set_defaults(func=cmd_tucker_demo)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except (ValueError, FileNotFoundError, DatasetFormatError, TrainingError) as exc:
        print(f"lldg {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
