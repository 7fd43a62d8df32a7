"""Command line entry point: ``pbac bench`` and ``pbac verify-ledger``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import ledger
from .bench import EXPERIMENTS, ConfigError, load_config, report_summary, run_bench, write_outputs


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbac", description="Ledger-backed access control simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    bench = sub.add_parser("bench", help="run a latency experiment")
    bench.add_argument("experiment", choices=EXPERIMENTS)
    bench.add_argument("--config", help="flat key=value settings file")
    bench.add_argument("--seed", type=_u64, default=None, help="run seed (overrides the config)")
    bench.add_argument("--out", default="out", help="output directory")
    bench.add_argument("--plot", action="store_true", help="also render a latency CDF as PNG")
    check = sub.add_parser("verify-ledger", help="check the hash chain of a ledger dump")
    check.add_argument("path")
    return parser


def _bench(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, args.experiment, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run_bench(cfg)
    paths = write_outputs(result, args.out)
    if args.plot:
        try:
            from .plotting import render_cdf
        except ImportError:  # pragma: no cover - depends on the optional extra
            print("plotting needs matplotlib (pip install artifact[plot])", file=sys.stderr)
            return 2
        paths.append(render_cdf(result.report, args.out))
    sys.stdout.write(report_summary(result.report))
    for path in paths:
        print(f"wrote {path}")
    if result.disagreements:
        print(f"decision disagreements: {result.disagreements}", file=sys.stderr)
        return 1
    return 0


def _verify(args: argparse.Namespace) -> int:
    try:
        with open(args.path, encoding="utf-8") as fp:
            led = ledger.load(fp)
    except (OSError, ValueError) as exc:
        print(f"cannot load ledger: {exc}", file=sys.stderr)
        return 2
    ok = ledger.verify_chain(led)
    print(f"{'ok' if ok else 'TAMPERED'} blocks={len(led)}")
    return 0 if ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        return _bench(args)
    return _verify(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
