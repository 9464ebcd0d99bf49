"""
Attend-Caption Command Line

Subcommands:
    gen-data   generate the synthetic scene corpus as an annotation file
    train      train a soft- or hard-attention decoder with early stopping
    caption    caption a dataset, optionally writing attention heatmaps
    evaluate   BLEU-1..4 and alignment score of a checkpoint on a split
    verify     run the oracle suites

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
Every command requires --seed.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

import orchestrator
from modules.verification import FAULTS, LEVELS
from utils.config_loader import get_config
from utils.run_config import build_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

ERROR_EXIT_CODES = {"data": EXIT_DATA, "numerical": EXIT_NUMERICAL, "internal": EXIT_USAGE}


class UsageErrorParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _word_list(value: str) -> List[str]:
    words = [w.strip() for w in value.split(",") if w.strip()]
    if not words:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return words


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, required=True, help="Seed for every random stream (mandatory)")
    parser.add_argument("--config", type=Path, help="YAML or JSON config file; flags override it")


def _add_mode(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=["soft", "hard"])


def build_parser() -> argparse.ArgumentParser:
    parser = UsageErrorParser(prog="attend-caption", description="Visual attention caption engine")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="Generate the synthetic corpus")
    _add_common(gen)
    gen.add_argument("--out", type=Path, required=True, help="Annotation file to write")
    gen.add_argument("--count", type=int)
    gen.add_argument("--grid-side", type=int)
    gen.add_argument("--colors", type=_word_list)
    gen.add_argument("--shapes", type=_word_list)
    gen.add_argument("--min-objects", type=int)
    gen.add_argument("--max-objects", type=int)
    gen.add_argument("--template", action="append", dest="templates", help="Caption template (repeatable)")
    gen.add_argument("--noise-sigma", type=float)
    refs = gen.add_mutually_exclusive_group()
    refs.add_argument("--all-references", dest="all_references", action="store_true", default=None)
    refs.add_argument("--primary-only", dest="all_references", action="store_false", default=None)

    tr = commands.add_parser("train", help="Train a decoder")
    _add_common(tr)
    _add_mode(tr)
    tr.add_argument("--dataset", type=Path, required=True)
    tr.add_argument("--output-dir", type=Path)
    tr.add_argument("--checkpoint", type=Path, help="Checkpoint path (default <output-dir>/model.ckpt)")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--patience", type=int)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--optimizer", choices=["rmsprop", "adam"])
    tr.add_argument("--lr", type=float)
    tr.add_argument("--clip-norm", type=float)
    tr.add_argument("--dropout", type=float)
    tr.add_argument("--lambda-penalty", type=float)
    tr.add_argument("--lambda-r", type=float)
    tr.add_argument("--lambda-e", type=float)
    tr.add_argument("--samples", type=int, help="Location samples per image (hard mode)")
    tr.add_argument("--substitution-prob", type=float)
    tr.add_argument("--baseline-decay", type=float)
    tr.add_argument("--embedding-dim", type=int)
    tr.add_argument("--hidden-dim", type=int)
    tr.add_argument("--attention-dim", type=int)
    tr.add_argument("--no-gate", dest="beta_gate", action="store_false", default=None)
    tr.add_argument("--max-len", type=int)

    cap = commands.add_parser("caption", help="Caption a dataset")
    _add_common(cap)
    _add_mode(cap)
    cap.add_argument("--checkpoint", type=Path, required=True)
    cap.add_argument("--dataset", type=Path, required=True)
    cap.add_argument("--output-dir", type=Path)
    cap.add_argument("--strategy", choices=["greedy", "beam", "sample"])
    cap.add_argument("--width", type=int, help="Beam width")
    cap.add_argument("--temperature", type=float)
    cap.add_argument("--max-len", type=int)
    cap.add_argument("--sample-attention", action="store_true", default=None)
    cap.add_argument("--no-gate", dest="beta_gate", action="store_false", default=None)
    cap.add_argument("--viz", action="store_true", help="Write heatmaps and a manifest per caption")
    cap.add_argument("--references", action="store_true", help="Print reference captions alongside")
    cap.add_argument("--limit", type=int, help="Caption only the first N records")

    ev = commands.add_parser("evaluate", help="Score a checkpoint on a split")
    _add_common(ev)
    _add_mode(ev)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--dataset", type=Path, required=True)
    ev.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    ev.add_argument("--report", type=Path, help="Write key=value results here")
    ev.add_argument("--output-dir", type=Path, help="Directory for effective_config.yaml (default: the report's directory)")
    ev.add_argument("--max-len", type=int)
    ev.add_argument("--no-gate", dest="beta_gate", action="store_false", default=None)

    ver = commands.add_parser("verify", help="Run the oracle suites")
    _add_common(ver)
    ver.add_argument("--level", choices=LEVELS, default="fast")
    ver.add_argument("--inject-fault", choices=FAULTS, help="Corrupt analytic gradients (test hook)")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values as config dot paths; unset flags are None and ignored."""
    def get(name: str) -> Any:
        return getattr(args, name, None)

    objects = None
    if get("min_objects") is not None or get("max_objects") is not None:
        low, high = get_config("data.objects_per_scene", [1, 3])
        objects = [get("min_objects") or low, get("max_objects") or high]
    return {
        "mode": get("mode"),
        "paths.dataset": get("dataset"),
        "paths.checkpoint": get("checkpoint"),
        "paths.output_dir": get("output_dir"),
        "data.count": get("count"),
        "data.all_references": get("all_references"),
        "data.spec.grid_side": get("grid_side"),
        "data.spec.colors": get("colors"),
        "data.spec.shapes": get("shapes"),
        "data.spec.objects_per_scene": objects,
        "data.spec.templates": get("templates"),
        "data.spec.noise_sigma": get("noise_sigma"),
        "training.max_epochs": get("epochs"),
        "training.patience": get("patience"),
        "training.batch_size": get("batch_size"),
        "training.clip_norm": get("clip_norm"),
        "training.soft.dropout_rate": get("dropout"),
        "training.hard.dropout_rate": get("dropout"),
        "training.soft.lambda_penalty": get("lambda_penalty"),
        "training.hard.lambda_r": get("lambda_r"),
        "training.hard.lambda_e": get("lambda_e"),
        "training.hard.sample_count": get("samples"),
        "training.hard.expectation_substitution_prob": get("substitution_prob"),
        "training.hard.baseline_decay": get("baseline_decay"),
        "training.optimizer.algorithm": get("optimizer"),
        "training.optimizer.learning_rate": get("lr"),
        "model.embedding_dim": get("embedding_dim"),
        "model.hidden_dim": get("hidden_dim"),
        "model.attention_dim": get("attention_dim"),
        "model.beta_gate": get("beta_gate"),
        "generation.strategy": get("strategy"),
        "generation.beam_width": get("width"),
        "generation.temperature": get("temperature"),
        "generation.max_len": get("max_len"),
        "generation.sample_attention": get("sample_attention"),
    }


def _exit_code(result: Dict[str, Any]) -> int:
    if result.get("success"):
        return EXIT_OK
    return ERROR_EXIT_CODES.get(result.get("error_kind"), EXIT_USAGE)


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("ATTN_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)

    if args.command == "verify":
        return _exit_code(orchestrator.run_verification(args.level, args.seed, args.inject_fault))

    try:
        config = build_run_config(args.seed, args.config, _overrides(args))
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ValidationError, ValueError) as e:
        print(f"error: invalid configuration\n{e}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "gen-data":
        result = orchestrator.run_gen_data(config, args.out)
    elif args.command == "train":
        result = orchestrator.run_training(config)
    elif args.command == "caption":
        result = orchestrator.run_captioning(config, viz=args.viz, show_references=args.references, limit=args.limit)
    else:
        result = orchestrator.run_evaluation(config, args.split, args.report, args.output_dir)

    if not result["success"]:
        print(f"error: {result['error']}", file=sys.stderr)
    return _exit_code(result)


if __name__ == "__main__":
    sys.exit(main())
