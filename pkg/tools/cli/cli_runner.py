#!/usr/bin/env python3
"""
NLG Experiment CLI

Command-line entry point for corpus preparation and synthesis, generator and
reranker training, generation, evaluation and cross-validation runs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from rich.console import Console

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.corpus import CorpusInstance, load_corpus, write_corpus
from core.data_model import parse_da
from core.errors import (
    CorpusValidationError,
    DAParseError,
    DialogueActError,
    FoldError,
    GrammarError,
    LeakageError,
    LexiconError,
    MissingModelError,
    ModelFormatError,
    TrainingError,
    VocabularyError,
)
from core.log_utils import get_logger
from core.model_store import load_generator, load_reranker
from core.surface_realizer import load_rules
from tools.experiment.config_loader import ExperimentConfig, load_config, load_slot_patterns
from tools.experiment.folds import check_partition, holdout_split, make_folds
from tools.experiment.report import render_table, write_reports
from tools.experiment.runner import (
    GREEDY,
    ExperimentContext,
    FoldModels,
    decode_instance,
    prepare_fold_models,
    run_cv,
    train_generator_model,
    train_reranker_model,
)
from tools.experiment.synthesize import load_grammar, realization_mismatches, synthesize_corpus

logger = get_logger("nlg.experiment")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3

DEFAULT_CONFIG = "config/experiment.yaml"
REALIZER_TARGET = 0.95

TRAINING_ERRORS = (TrainingError, MissingModelError, ModelFormatError)
DATA_ERRORS = (DAParseError, DialogueActError, CorpusValidationError, LexiconError, FoldError, LeakageError,
               GrammarError, VocabularyError, FileNotFoundError, ValueError)


class UsageError(Exception):
    """Invalid combination of command line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class ExperimentCLI:
    """Runs one subcommand against a loaded experiment configuration."""

    def __init__(self, config: ExperimentConfig, config_path: Optional[str] = None,
                 console: Optional[Console] = None):
        self.config = config
        self.config_path = config_path
        self.console = console or Console()
        self.run_dir = config.run_dir()
        self.rules = load_rules(config.paths.rules)

    def context(self, with_lexicon: bool = True) -> ExperimentContext:
        lexicon = load_slot_patterns(self.config.paths.slot_patterns) if with_lexicon else None
        return ExperimentContext(self.config, self.rules, self.run_dir, lexicon, self.config_path)

    def corpus(self, path: Optional[str] = None) -> List[CorpusInstance]:
        return load_corpus(path or self.config.paths.corpus)

    def synthesize(self, n_das: Optional[int], output: Optional[str]) -> int:
        grammar = load_grammar(self.config.paths.grammar)
        instances = synthesize_corpus(grammar, n_das or self.config.synthetic_das, self.config.seed, self.rules)
        path = write_corpus(output or self.config.paths.corpus, instances)
        self.console.print(f"Wrote {len(instances)} DAs with {2 * len(instances)} references to {path}")
        return EXIT_OK

    def prepare(self, corpus_path: Optional[str]) -> int:
        corpus = self.corpus(corpus_path)
        lexicon = load_slot_patterns(self.config.paths.slot_patterns)
        classes = sorted({c for inst in corpus for c in inst.da.slot_value_classes()})
        lexicon.check_coverage(classes)
        plan = make_folds(corpus, self.config.folds, self.config.validation_das_per_fold, self.config.seed)
        check_partition(plan, len(corpus))
        with_trees = [inst for inst in corpus if inst.has_trees()]
        self.console.print(f"Corpus: {len(corpus)} DAs, {sum(len(i.refs) for i in corpus)} references, "
                           f"{len(classes)} slot=value classes, {len(with_trees)} DAs with trees")
        self.console.print("Fold test sizes: " + ", ".join(str(len(f.test)) for f in plan.folds))
        if with_trees:
            mismatched = realization_mismatches(with_trees, self.rules)
            rate = 1.0 - len(mismatched) / len(with_trees)
            self.console.print(f"Realizer reproduces {rate:.1%} of tree/reference pairs")
            if rate < REALIZER_TARGET:
                logger.warning(f"Realizer match rate below {REALIZER_TARGET:.0%}: {mismatched[:10]}")
        return EXIT_OK

    def _split(self, corpus: List[CorpusInstance], fold: Optional[int]):
        if fold is None:
            split = holdout_split(len(corpus), self.config.validation_das_per_fold, self.config.seed)
        else:
            plan = make_folds(corpus, self.config.folds, self.config.validation_das_per_fold, self.config.seed)
            if not 0 <= fold < len(plan):
                raise UsageError(f"--fold must be between 0 and {len(plan) - 1}")
            split = plan.folds[fold]
        return [corpus[i] for i in split.fit], [corpus[i] for i in split.validation]

    def train(self, fold: Optional[int], reranker: bool) -> int:
        corpus = self.corpus()
        fit, validation = self._split(corpus, fold)
        ctx = self.context(with_lexicon=False)
        trainer = train_reranker_model if reranker else train_generator_model
        path = trainer(ctx, fit, validation, fold)
        self.console.print(f"Saved {'reranker' if reranker else 'generator'} to {path}")
        return EXIT_OK

    def generate(self, da_text: Optional[str], input_path: Optional[str], fold: Optional[int], beam: int,
                 use_reranker: bool, lex: List[str]) -> int:
        if (da_text is None) == (input_path is None):
            raise UsageError("Give exactly one of --da or --input")
        if use_reranker and beam < 2:
            raise UsageError("--rerank needs --beam of at least 2")
        ctx = self.context(with_lexicon=False)
        model_dir = ctx.model_dir(fold)
        generator, header = load_generator(model_dir / "generator.npz", ctx.train_command(fold))
        reranker = None
        if use_reranker:
            reranker, _ = load_reranker(model_dir / "reranker.npz", ctx.train_command(fold, reranker=True))
        models = FoldModels(generator, reranker, header["training_da_ids"])
        setup = GREEDY if beam == 1 else f"{'rerank' if use_reranker else 'beam'}-{beam}"

        if da_text is not None:
            lex_map = {}
            for item in lex:
                key, sep, value = item.partition("=")
                if not sep:
                    raise UsageError(f"--lex expects KEY=VALUE, got '{item}'")
                lex_map[key] = value
            instances = [CorpusInstance("input", parse_da(da_text), [], [], lex_map)]
        else:
            instances = load_corpus(input_path)
        for instance in instances:
            output = decode_instance(ctx, models, instance, setup, fold)
            self.console.print(f"{instance.da_id}\t{output.relexicalized}", highlight=False)
        return EXIT_OK

    def _cross_validate(self, train_missing: bool) -> int:
        corpus = self.corpus()
        plan = make_folds(corpus, self.config.folds, self.config.validation_das_per_fold, self.config.seed)
        ctx = self.context()
        ctx.lexicon.check_coverage({c for inst in corpus for c in inst.da.slot_value_classes()})
        result = run_cv(ctx, corpus, plan, train_missing=train_missing)
        write_reports(self.run_dir, result, corpus, ctx.mode, self.config.config_hash(), ctx.plural_lexicon,
                      self.config.bootstrap_iterations, self.config.seed)
        render_table(result, self.console, title=f"{ctx.mode} mode, {len(plan)} folds")
        self.console.print(f"Reports in {self.run_dir}")
        if all(r.failed for r in result.setups):
            return EXIT_TRAINING
        return EXIT_OK

    def evaluate(self) -> int:
        return self._cross_validate(train_missing=False)

    def cv(self) -> int:
        return self._cross_validate(train_missing=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlg-experiment", description="Seq2seq NLG experiments on dialogue act corpora")
    parser.add_argument("--config", default=DEFAULT_CONFIG, help="Experiment config file (YAML)")
    parser.add_argument("--seed", type=int, help="Override the configured seed")
    parser.add_argument("--mode", choices=["string", "tree"], help="Override the generation mode")
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    prepare = subparsers.add_parser("prepare", help="Validate a corpus and show its fold plan")
    prepare.add_argument("--corpus", help="Corpus file (default: paths.corpus)")

    synth = subparsers.add_parser("synthesize", help="Generate the synthetic corpus")
    synth.add_argument("--n", type=int, help="Number of DAs (default: synthetic_das)")
    synth.add_argument("--output", help="Output corpus file (default: paths.corpus)")

    for name, help_text in (("train", "Train a generator"), ("train-reranker", "Train a reranker")):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--fold", type=int, help="Train the model of one CV fold instead of the full corpus")

    generate = subparsers.add_parser("generate", help="Generate sentences with a trained model")
    generate.add_argument("--da", help="Dialogue act, e.g. 'inform(name=X-name, food=French)'")
    generate.add_argument("--input", help="Corpus file of DAs to generate for")
    generate.add_argument("--fold", type=int, help="Use a CV fold's models instead of the full-corpus models")
    generate.add_argument("--beam", type=int, default=1, help="Beam size (1 = greedy)")
    generate.add_argument("--rerank", action="store_true", help="Rerank the n-best list")
    generate.add_argument("--lex", action="append", default=[], help="Placeholder value, e.g. X-name='Loch Fyne'")

    subparsers.add_parser("evaluate", help="Score existing fold models and write reports")
    subparsers.add_parser("cv", help="Run cross-validation, training missing models")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    try:
        config = load_config(args.config).with_overrides(seed=args.seed, mode=args.mode)
        cli = ExperimentCLI(config, args.config)
        if args.command == "prepare":
            return cli.prepare(args.corpus)
        if args.command == "synthesize":
            return cli.synthesize(args.n, args.output)
        if args.command in ("train", "train-reranker"):
            return cli.train(args.fold, reranker=args.command == "train-reranker")
        if args.command == "generate":
            return cli.generate(args.da, args.input, args.fold, args.beam, args.rerank, args.lex)
        if args.command == "evaluate":
            return cli.evaluate()
        return cli.cv()
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TRAINING_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_TRAINING
    except DATA_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    """Main CLI entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
