"""Command-line entry point of the sentiment attitude extraction toolkit.

Commands:
- train:         fit context classifiers (SL or DS mode, cv3 or fixed format)
- eval:          score checkpoints with document-level macro F1
- annotate:      build a distant-supervision corpus from news titles
- analyze:       attention weight statistics of an attentive model
- gen-synthetic: write a seeded synthetic desk bundle
- compare:       effectiveness ratio of two score reports

Usage: python -m app.main <command> [--config PATH] [--seed N] [--out DIR] ...
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from app.config.settings import ConfigError, apply_overrides, load_config, settings

logger = logging.getLogger(__name__)


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    ap = argparse.ArgumentParser(description="Sentiment attitude extraction with frames and attention")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_run_options(parser: argparse.ArgumentParser, checkpoint: bool = False):
        parser.add_argument("--config", type=Path, default=None, help="Run config file (SECTION__KEY=value lines)")
        parser.add_argument("--seed", type=int, default=None, help="Override SEED")
        parser.add_argument("--out", type=Path, default=None, help="Override PATHS__OUT")
        parser.add_argument("--mode", choices=["sl", "ds"], default=None, help="Override MODE")
        if checkpoint:
            parser.add_argument(
                "--checkpoint", type=Path, default=None,
                help="Checkpoint file, or a train output directory (default: PATHS__OUT)",
            )

    add_run_options(sub.add_parser("train", help="Train context classifiers"))
    add_run_options(sub.add_parser("eval", help="Evaluate checkpoints"), checkpoint=True)
    add_run_options(sub.add_parser("annotate", help="Distant-supervision annotation of news"))
    add_run_options(sub.add_parser("analyze", help="Attention weight analysis"), checkpoint=True)

    gen = sub.add_parser("gen-synthetic", help="Write a synthetic desk bundle")
    add_run_options(gen)
    gen.add_argument("--size", type=int, default=200, help="Number of news documents")
    gen.add_argument("--main-size", type=int, default=40, help="Number of main corpus documents")
    gen.add_argument("--d-word", type=int, default=32, help="Toy embedding dimension")
    gen.add_argument("--positive-only", action="store_true", help="Only positive relations and frames")

    compare = sub.add_parser("compare", help="Effectiveness ratio of two score reports")
    compare.add_argument("result", type=Path, help="Score report of the evaluated setup")
    compare.add_argument("baseline", type=Path, help="Score report of the baseline setup")
    return ap.parse_args(argv)


def run(args: argparse.Namespace) -> int:
    from app.routes import commands

    if args.command == "compare":
        result = commands.cmd_compare(args.result, args.baseline)
        print(f"result={result['result']:.6f} baseline={result['baseline']:.6f} ratio={result['ratio']:+.6f}")
        return 0

    config = apply_overrides(load_config(args.config), seed=args.seed, out=args.out, mode=args.mode)

    if args.command == "train":
        for name, result in commands.cmd_train(config).items():
            last = result.history[-1].f1 if result.history else float("nan")
            print(f"{name}: epochs={result.epochs_run} stopped_early={result.stopped_early} train_f1={last:.6f}")
    elif args.command == "eval":
        report = commands.cmd_eval(config, args.checkpoint)
        for name, score in report.fold_scores.items():
            print(f"F1_{name}\t{score:.6f}")
        print(f"F1_avg\t{report.average:.6f}")
    elif args.command == "annotate":
        print(commands.cmd_annotate(config).summary())
    elif args.command == "analyze":
        print(commands.cmd_analyze(config, args.checkpoint).text(), end="")
    elif args.command == "gen-synthetic":
        from app.services.annotation.synthetic import GeneratorConfig

        generator = GeneratorConfig(
            documents=args.size, main_documents=args.main_size, d_word=args.d_word, positive_only=args.positive_only
        )
        for name, path in commands.cmd_gen_synthetic(config, generator).items():
            print(f"{name}\t{path}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=settings.log_level.upper(), format=settings.log_format)
    args = _parse_args(argv)
    try:
        return run(args)
    except ConfigError as e:
        logger.error(str(e))
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=settings.log_level.upper() == "DEBUG")
    return 1


if __name__ == "__main__":
    sys.exit(main())
