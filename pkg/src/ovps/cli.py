"""``ovps`` command line: classify, eval, losses, simstats, hierarchy, genfix.

Exit codes: 0 success, 2 validation error, 3 data error, 4 numerical check failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .errors import OVPSError
from .fixtures import FixtureSpec
from .io import read_concept_set

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("ovps")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="run configuration JSON")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for fixtures and probes")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default 1)")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="ovps", parents=[common],
                                     description="Open-vocabulary panoptic decision pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="classify and merge every scene")
    p.add_argument("--timings", action="store_true", help="record per-image seconds in the manifest")

    p = sub.add_parser("eval", parents=[common], help="PQ/SQ/RQ and mIoU of predictions against GT")
    p.add_argument("--pred", type=Path, required=True, help="directory of predicted panoptic results")
    p.add_argument("--gt", type=Path, required=True, help="directory of ground-truth panoptic results")
    p.add_argument("--concepts", type=Path, help="concept set JSON (default: predicting set of --config)")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("losses", parents=[common], help="training losses per scene")
    p.add_argument("--gradcheck", action="store_true", help="finite-difference check of every loss")
    p.add_argument("--points", type=int, default=10, help="probe points per loss for --gradcheck")

    p = sub.add_parser("simstats", parents=[common], help="pairwise category similarity statistics")
    p.add_argument("concepts", type=Path, help="concept set JSON")
    p.add_argument("--no-figures", action="store_true")

    sub.add_parser("hierarchy", parents=[common], help="coarse-to-fine category paths")

    p = sub.add_parser("genfix", parents=[common], help="write a synthetic fixture corpus")
    p.add_argument("--count", type=int, default=2, help="number of scenes")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--jitter", type=int, default=0)
    p.add_argument("--size", type=int, nargs=2, default=(32, 32), metavar=("H", "W"))
    p.add_argument("--proposals", type=int, default=6)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--categories", type=int, default=8)
    return parser


def _configure_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("OVPS_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _require(args, name: str):
    if not hasattr(args, name):
        raise pipeline.ValidationError(f"--{name} is required for '{args.command}'")
    return getattr(args, name)


def run(args) -> None:
    threads = getattr(args, "threads", 1)
    if threads < 1:
        raise pipeline.ValidationError(f"--threads must be >= 1, got {threads}")
    out = getattr(args, "out", Path("."))
    cmd = args.command

    if cmd == "genfix":
        spec = FixtureSpec(seed=getattr(args, "seed", 0), height=args.size[0], width=args.size[1],
                           num_proposals=args.proposals, dim=args.dim, num_predicting=args.categories,
                           num_training=args.categories, noise=args.noise, jitter=args.jitter)
        pipeline.run_genfix(out, seed=spec.seed, count=args.count, spec=spec)
    elif cmd == "simstats":
        pipeline.run_simstats(args.concepts, out, figures=not args.no_figures)
    elif cmd == "eval":
        if args.concepts is not None:
            concepts = read_concept_set(args.concepts)
        else:
            cfg = pipeline.load_config(_require(args, "config"))
            concepts = read_concept_set(cfg.predicting_concepts)
        pipeline.run_eval(args.pred, args.gt, concepts, out, threads=threads, figures=not args.no_figures)
    else:
        cfg = pipeline.load_config(_require(args, "config"))
        if cmd == "classify":
            pipeline.run_classify(cfg, out, threads=threads, record_timings=args.timings)
        elif cmd == "losses":
            seed = getattr(args, "seed", 0) if args.gradcheck else None
            pipeline.run_losses(cfg, out, threads=threads, gradcheck_seed=seed, gradcheck_points=args.points)
        elif cmd == "hierarchy":
            pipeline.run_hierarchy(cfg, out, threads=threads)
    log.info("%s finished, outputs in %s", cmd, out)


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except OVPSError as exc:
        print(f"ovps {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
