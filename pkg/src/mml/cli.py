"""Command-line driver: ``mml eval|train-fusion|sweep|gen-bank``.

Exit codes: 0 success, 2 invalid config, 3 data/parse error, 4 numerical-domain error.
"""

import argparse
import json
import sys

from .bank_io import write_bank
from .episodes import SyntheticSpec, generate_synthetic
from .errors import BankFormatError, InvalidArgumentError, MMLError, NumericalDomainError
from .fusion import FusionWeights
from .harness import RunConfig, RunReport, evaluate, sweep, train_fusion
from .metrics import MetricConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_SYNTH_KEYS = {
    "classes": ("num_classes", int),
    "per_class": ("per_class", int),
    "shape": ("shape", lambda v: tuple(int(x) for x in v.lower().split("x"))),
    "mean_scale": ("class_mean_scale", float),
    "noise": ("noise_scale", float),
    "part_signal": ("part_signal", lambda v: v.lower() in ("1", "true", "yes", "on")),
    "identical": ("identical_classes", lambda v: v.lower() in ("1", "true", "yes", "on")),
    "relu": ("relu", lambda v: v.lower() in ("1", "true", "yes", "on")),
    "seed": ("seed", int),
    "splits": ("split_counts", lambda v: tuple(int(x) for x in v.split("/"))),
}


def parse_synthetic(text):
    """Parse ``key=value,...`` into a :class:`SyntheticSpec`.

    Keys: classes, per_class, shape (CxHxW), mean_scale, noise, part_signal,
    identical, relu, seed, splits (train/val/test counts). Example::

        classes=20,per_class=20,shape=16x5x5,mean_scale=1,noise=0.5,splits=10/0/10
    """
    kwargs = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in _SYNTH_KEYS:
            raise InvalidArgumentError(f"bad synthetic spec item {item!r}")
        name, conv = _SYNTH_KEYS[key]
        try:
            kwargs[name] = conv(value)
        except ValueError as exc:
            raise InvalidArgumentError(f"bad value for {key}: {value!r}") from exc
    return SyntheticSpec(**kwargs)


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="mml", description="Few-shot harness fusing part, pixel and distribution similarities")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--bank", metavar="PATH", help="MMLF feature bank")
    src.add_argument("--synthetic", metavar="SPEC", help="synthetic bank recipe, key=value,...")
    common.add_argument("--seed", type=_u64, default=0)
    common.add_argument("--out", metavar="PATH", help="output file (default stdout)")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--n-way", type=int, default=5)
    run.add_argument("--m-shot", type=int, default=1)
    run.add_argument("--queries", type=int, default=15)
    run.add_argument("--tasks", type=int, default=1000)
    run.add_argument("--xi", type=int, default=1)
    run.add_argument("--k", type=int, default=1)
    run.add_argument("--dist", choices=["kl", "wass", "wass-exact"], default="kl")
    run.add_argument("--kl-direction", choices=["support||query", "query||support"],
                     default="support||query")
    run.add_argument("--branches", default="part,pixel,dist")
    run.add_argument("--shrinkage", type=float, default=1e-3)
    run.add_argument("--absolute-shrinkage", action="store_true",
                     help="do not scale the shrinkage by the mean covariance diagonal")
    run.add_argument("--weights", metavar="PATH", help="fusion checkpoint to start from")
    run.add_argument("--split", choices=["train", "val", "test"], default="test")
    run.add_argument("--format", choices=["json", "tsv"], default="json")

    sub.add_parser("eval", parents=[common, run], help="evaluate on an episode stream")
    tr = sub.add_parser("train-fusion", parents=[common, run], help="train fusion weights")
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--batch-size", type=int, default=4, help="episodes per gradient step")
    tr.add_argument("--lr-decay-every", type=int, default=0,
                    help="halve the learning rate every N steps (0 disables)")
    sw = sub.add_parser("sweep", parents=[common, run], help="grid over xi and k")
    sw.add_argument("--xi-values", type=_int_list, default=[1, 3, 5, 7, 9])
    sw.add_argument("--k-values", type=_int_list, default=[1, 3, 5, 7, 9])
    sub.add_parser("gen-bank", parents=[common], help="write a synthetic bank as MMLF")
    return parser


def _run_config(args, mode):
    if args.bank is None and args.synthetic is None:
        raise InvalidArgumentError("one of --bank or --synthetic is required")
    bank = args.bank if args.bank is not None else parse_synthetic(args.synthetic)
    metric = MetricConfig(xi=args.xi, k=args.k, distribution=args.dist,
                          shrinkage=args.shrinkage, relative_shrinkage=not args.absolute_shrinkage,
                          kl_direction=args.kl_direction)
    extra = {}
    if mode == "train-fusion":
        extra = dict(lr=args.lr, batch_size=args.batch_size, lr_decay_every=args.lr_decay_every)
    return RunConfig(bank=bank, n_way=args.n_way, m_shot=args.m_shot,
                     queries_per_class=args.queries, tasks=args.tasks, metric=metric,
                     branches=args.branches, mode=mode, seed=args.seed,
                     output_path=args.out, split=args.split, **extra)


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def format_reports(reports, fmt):
    if fmt == "tsv":
        lines = ["\t".join(RunReport.TSV_COLUMNS)] + [r.tsv_row() for r in reports]
        return "\n".join(lines) + "\n"
    payload = reports[0].to_dict() if len(reports) == 1 else {"cells": [r.to_dict() for r in reports]}
    return json.dumps(payload, indent=2) + "\n"


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "gen-bank":
        if args.synthetic is None or args.out is None:
            raise InvalidArgumentError("gen-bank needs --synthetic and --out")
        spec = parse_synthetic(args.synthetic)
        if "seed=" not in args.synthetic:
            spec = SyntheticSpec(**{**spec.__dict__, "seed": args.seed})
        write_bank(generate_synthetic(spec), args.out)
        return
    cfg = _run_config(args, args.command)
    weights = FusionWeights.load(args.weights) if args.weights else None
    if args.command == "eval":
        _emit(format_reports([evaluate(cfg, weights)], args.format), args.out)
    elif args.command == "sweep":
        _emit(format_reports(sweep(cfg, args.xi_values, args.k_values, weights), args.format),
              args.out)
    else:
        ckpt = args.out or "fusion_weights.json"
        trained = train_fusion(cfg, weights, checkpoint_path=ckpt)
        sys.stderr.write(f"wrote {ckpt}: w={trained.w.tolist()}\n")


def main(argv=None):
    try:
        run(argv)
    except InvalidArgumentError as exc:
        print(f"mml: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BankFormatError, OSError) as exc:
        print(f"mml: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalDomainError as exc:
        print(f"mml: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MMLError as exc:
        print(f"mml: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
