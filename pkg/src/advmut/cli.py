"""Command-line entry point.

    advmut corpus gen        --config c.txt --seed 42 --out runs/x
    advmut detectors train   ...
    advmut feagan train      ...
    advmut agent train       ...
    advmut attack run        ...
    advmut report            ...

Exit codes: 0 success, 1 error, 2 a report-level assertion failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, load_config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key-value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--out", type=Path, default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advmut", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="corpus operations").add_subparsers(
        dest="subcommand", required=True
    )
    _add_common(corpus.add_parser("gen", help="generate the corpus and feature caches"))

    det = sub.add_parser("detectors", help="detector operations").add_subparsers(
        dest="subcommand", required=True
    )
    _add_common(det.add_parser("train", help="train the detector zoo and target models"))

    feagan = sub.add_parser("feagan", help="feature-GAN operations").add_subparsers(
        dest="subcommand", required=True
    )
    _add_common(feagan.add_parser("train", help="train one GAN per representative target"))

    agent = sub.add_parser("agent", help="mutation-agent operations").add_subparsers(
        dest="subcommand", required=True
    )
    _add_common(agent.add_parser("train", help="train one policy per representative target"))

    attack = sub.add_parser("attack", help="attack-evaluation operations").add_subparsers(
        dest="subcommand", required=True
    )
    _add_common(attack.add_parser("run", help="mutate the attack set; policy vs random baseline"))

    report = sub.add_parser("report", help="assemble the scenario reports")
    _add_common(report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    try:
        if args.command == "corpus":
            harness.stage_corpus(cfg)
        elif args.command == "detectors":
            harness.stage_detectors(cfg)
        elif args.command == "feagan":
            harness.stage_gan(cfg)
        elif args.command == "agent":
            harness.stage_agent(cfg)
        elif args.command == "attack":
            harness.stage_attack(cfg)
        elif args.command == "report":
            _, failures = harness.run_report(cfg)
            if failures:
                for failure in failures:
                    print(f"assertion failed: {failure}", file=sys.stderr)
                return 2
            print(f"reports written to {Path(cfg.out_dir) / 'reports'}")
    except harness.MissingArtifact as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
