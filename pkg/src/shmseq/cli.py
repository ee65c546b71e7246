"""Command line interface: `shmseq gen | run | report`."""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .errors import ConfigError, ShmSeqError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shmseq",
        description="Sequential structural damage detection and localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a labeled synthetic data set")
    p_gen.add_argument("--scenario", required=True, help="scenario JSON file")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p_run = sub.add_parser("run", help="run detection and localization on a data set")
    p_run.add_argument("--config", help="JSON file supplying any of the flags below")
    p_run.add_argument("--input", dest="input_csv", help="monitored signal CSV")
    p_run.add_argument("--training", dest="training_csv", help="pre-damage training CSV")
    p_run.add_argument("--post-training", dest="postdamage_csv", help="post-damage CSV (known mode)")
    p_run.add_argument("--metadata", dest="metadata_json", help="metadata JSON from `gen`")
    p_run.add_argument("--out", dest="output_dir", help="output directory")
    p_run.add_argument("--mode", choices=("known", "adaptive"))
    p_run.add_argument("--alpha", type=float)
    p_run.add_argument("--rho", type=float)
    p_run.add_argument("--chunk-size", dest="chunk_size", type=int)
    p_run.add_argument("--order", help="AR order, or 'auto' for AIC selection")
    p_run.add_argument("--p-max", dest="p_max", type=int, help="largest order tried by 'auto'")
    p_run.add_argument("--coeffs", help="comma-separated 1-based AR coefficient subset")
    p_run.add_argument("--lambda-true", dest="lambda_true", type=int, help="true damage chunk for delay reporting")
    p_run.add_argument("--warmup", type=int, help="adaptive mode: steps before detection is allowed")
    p_run.add_argument("--positions", help="comma-separated column=label pairs")
    p_run.add_argument("--dump-dsf", dest="dump_dsf", action="store_true", default=None)
    p_run.add_argument("--dump-estimates", dest="dump_estimates", action="store_true", default=None)

    p_rep = sub.add_parser("report", help="summarize a finished run")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.add_argument("--out", default=None, help="where to write the CCDF plot data")
    return parser


def _run_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"{args.config}: {err}") from err
    overrides = {
        "input_csv": args.input_csv,
        "training_csv": args.training_csv,
        "postdamage_csv": args.postdamage_csv,
        "metadata_json": args.metadata_json,
        "output_dir": args.output_dir,
        "mode": args.mode,
        "alpha": args.alpha,
        "rho": args.rho,
        "chunk_size": args.chunk_size,
        "p_max": args.p_max,
        "lambda_true": args.lambda_true,
        "warmup": args.warmup,
        "dump_dsf": args.dump_dsf,
        "dump_estimates": args.dump_estimates,
    }
    if args.order is not None:
        overrides["order"] = args.order if args.order == "auto" else int(args.order)
    if args.coeffs is not None:
        try:
            overrides["coef_indices"] = tuple(int(t) for t in args.coeffs.split(","))
        except ValueError:
            raise ConfigError(f"cannot parse --coeffs {args.coeffs!r}") from None
    if args.positions is not None:
        positions = {}
        for pair in args.positions.split(","):
            if "=" not in pair:
                raise ConfigError(f"cannot parse --positions entry {pair!r}")
            col, label = pair.split("=", 1)
            positions[col.strip()] = label.strip()
        overrides["positions"] = positions
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if isinstance(data.get("order"), str) and data["order"] != "auto":
        data["order"] = int(data["order"])
    return pipeline.PipelineConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            paths = pipeline.gen(args.scenario, args.out, seed=args.seed)
            print(f"wrote {paths['data']} and {paths['metadata']}")
            return 0
        if args.command == "run":
            result = pipeline.run(_run_config(args))
            detected = result.summary["detected"]
            print(f"detected={detected} outputs in {result.output_dir}")
            return result.exit_code
        if args.command == "report":
            print(pipeline.report(args.run_dir, args.out))
            return 0
    except ShmSeqError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
