"""Command-line front end: ``probrec --mode ... --out DIR``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .pipeline import MODES, RunConfig, classify_effect, run

__all__ = ["main", "build_parser", "classify_effect"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="probrec",
        description="Reconcile hierarchical probabilistic forecasts by conditioning.",
    )
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--hierarchy", help="hierarchy JSON (labels_upper, labels_bottom, A)")
    p.add_argument("--forecasts", help="base forecast JSON, or simulation parameters for simulate-study")
    p.add_argument("--obs", help="observations CSV with one column per series label")
    p.add_argument("--n-draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tail-tol", type=float, default=1e-9)
    p.add_argument("--alpha", type=float, default=0.1, help="interval level: score (1-alpha) intervals")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--es-pairing", choices=("disjoint", "all"), default="disjoint")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    cfg = RunConfig(
        mode=args.mode,
        out=args.out,
        hierarchy=args.hierarchy,
        forecasts=args.forecasts,
        obs=args.obs,
        n_draws=args.n_draws,
        seed=args.seed,
        tail_tol=args.tail_tol,
        alpha=args.alpha,
        workers=args.workers,
        es_pairing=args.es_pairing,
    )
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
