"""Command line entry point: `mdes <experiment> --out DIR [options]`.

Prints the experiment verdict as JSON; exits 0 when every embedded check
passed and 2 otherwise.
"""
import argparse
import json
import sys

from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mdes",
        description="Seeded early-stopped mirror descent experiments",
    )
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS))
    parser.add_argument("--config", help="JSON file with base_seed/replicates/params")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seeds", type=int, help="number of replicates")
    parser.add_argument("--base-seed", type=int, help="64-bit base seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.config:
        cfg = ExperimentConfig.from_json(
            args.config,
            experiment=args.experiment,
            output_dir=args.out,
            replicates=args.seeds,
            base_seed=args.base_seed,
            jobs=args.jobs,
        )
    else:
        cfg = ExperimentConfig(
            experiment=args.experiment,
            output_dir=args.out,
            base_seed=args.base_seed if args.base_seed is not None else 0,
            replicates=args.seeds,
            jobs=args.jobs,
        )
    verdict = run_experiment(cfg)
    print(json.dumps(verdict, indent=2, sort_keys=True, default=float))
    return 0 if verdict["passed"] else 2


if __name__ == "__main__":
    sys.exit(main())
