# app.py
"""
Command-line entry point.

    python app.py gen-data --out runs/data --seed 0
    python app.py train --dataset runs/data --variant forceful --out runs/forceful
    python app.py eval --checkpoint runs/forceful/forceful.ckpt --variant forceful --out runs/eval
    python app.py report --reports runs/eval/eval_forceful.json runs/eval/eval_position_only.json --out runs/report
    python app.py inspect runs/data

Exit codes: 0 success, 1 runtime failure, 2 validation failure,
3 skipped-object rate above the generation limit.
"""

import argparse
import sys
from pathlib import Path

from src.pipeline import COMMANDS, EXIT_VALIDATION, RunConfig, default_jobs, run_pipeline

parser = argparse.ArgumentParser(
    description="Force-aware grasping: demonstrations, diffusion policies and evaluation",
    formatter_class=argparse.ArgumentDefaultsHelpFormatter,
)

parser.add_argument("command", choices=COMMANDS, help="Stage to run")
parser.add_argument("target", nargs="?", type=Path, default=None, help="Dataset or checkpoint to inspect")
parser.add_argument("--config", dest="config", type=Path, default=None, help="JSON config file")
parser.add_argument("--seed", dest="seed", type=int, default=0, help="Base seed")
parser.add_argument(
    "--variant",
    dest="variant",
    choices=("forceful", "position-only"),
    default="forceful",
    help="Policy variant",
)
parser.add_argument("--jobs", dest="jobs", type=int, default=None, help="Worker processes (default: FORCEGRASP_JOBS)")
parser.add_argument("--out", dest="out", type=Path, default=Path("runs"), help="Output directory")
parser.add_argument("--dataset", dest="dataset", type=Path, default=None, help="Episode file or gen-data directory")
parser.add_argument("--checkpoint", dest="checkpoint", type=Path, default=None, help="Policy checkpoint")
parser.add_argument("--reports", dest="reports", type=Path, nargs="+", default=[], help="Eval report JSON files")
parser.add_argument("--expert", dest="expert", action="store_true", help="Evaluate the expert controller")
parser.add_argument("--steps", dest="steps", type=int, default=None, help="Override the training step count")


def main(argv=None) -> int:
    args = parser.parse_args(argv)

    try:
        run = RunConfig(
            command=args.command,
            out=args.out,
            seed=args.seed,
            jobs=args.jobs if args.jobs is not None else default_jobs(),
            variant=args.variant,
            config_path=args.config,
            dataset=args.dataset,
            checkpoint=args.checkpoint,
            reports=list(args.reports),
            target=args.target,
            expert=args.expert,
            steps=args.steps,
        )
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    result = run_pipeline(run)
    if result.get("text"):
        print(result["text"], end="")
    if not result["success"]:
        print(f"Error: {result['error']}", file=sys.stderr)
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
