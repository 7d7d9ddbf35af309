"""
Tests for fold planning, experiment configuration, corpus synthesis, the
cross-validation runner and the report writer.
"""

import json
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent.parent))

from core.config import RerankConfig, TrainConfig
from core.corpus import load_corpus, write_corpus
from core.data_model import detokenize, parse_da, tokenize_sentence
from core.errors import FoldError, GrammarError, LeakageError, MissingModelError
from core.evaluation import slot_errors
from core.model_store import load_generator
from core.seq2seq import GeneratorParams
from core.surface_realizer import load_rules
from tools.experiment.config_loader import ExperimentConfig, PathsConfig, load_config, load_slot_patterns
from tools.experiment.folds import check_partition, fold_seed, holdout_split, make_folds
from tools.experiment.report import COLUMNS, render_table, write_reports
from tools.experiment.runner import (
    CVResult,
    ExperimentContext,
    FoldModels,
    check_leakage,
    decode_instance,
    output_text,
    parse_setup,
    run_cv,
    run_setup,
    setup_names,
)
from tools.experiment.synthesize import load_grammar, realization_mismatches, synthesize_corpus

REPO_ROOT = Path(__file__).parent.parent
CONFIG_DIR = REPO_ROOT / "config"


def experiment_config(reports_dir: Path, **overrides) -> ExperimentConfig:
    """Tiny settings that train in seconds."""
    settings = dict(
        mode="string",
        train=TrainConfig(embedding_size=6, cell_size=8, batch_size=10, max_passes=2, patience_passes=2,
                          restarts=1, max_decode_length=20),
        rerank=RerankConfig(max_passes=3),
        beam_sizes=[1, 3],
        folds=2,
        validation_das_per_fold=1,
        paths=PathsConfig(
            corpus=str(reports_dir / "corpus.jsonl"),
            reports_dir=str(reports_dir),
            rules=str(CONFIG_DIR / "realization_rules.yaml"),
            grammar=str(CONFIG_DIR / "synthetic_grammar.yaml"),
            slot_patterns=str(CONFIG_DIR / "slot_patterns.yaml"),
        ),
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def make_context(config: ExperimentConfig) -> ExperimentContext:
    return ExperimentContext(config, load_rules(config.paths.rules), config.run_dir(),
                             load_slot_patterns(config.paths.slot_patterns))


class TestFolds:
    """DA-level cross-validation plans."""

    def test_202_da_corpus(self):
        plan = make_folds(range(202), folds=10, validation_per_fold=10, seed=1)
        sizes = sorted(len(f.test) for f in plan.folds)
        assert sizes == [20] * 8 + [21] * 2
        assert sorted(len(f.train) for f in plan.folds) == [181] * 2 + [182] * 8
        assert all(len(f.validation) == 10 for f in plan.folds)
        check_partition(plan, 202)

    def test_validation_inside_training_part(self):
        plan = make_folds(range(40), folds=4, validation_per_fold=3, seed=5)
        for fold in plan.folds:
            assert set(fold.validation) <= set(fold.train)
            assert not set(fold.train) & set(fold.test)
            assert not set(fold.fit) & set(fold.validation)
            assert len(fold.fit) == len(fold.train) - 3

    def test_deterministic(self):
        first = make_folds(range(30), 3, 2, seed=7)
        assert first.to_dict() == make_folds(range(30), 3, 2, seed=7).to_dict()
        assert first.to_dict() != make_folds(range(30), 3, 2, seed=8).to_dict()

    def test_fewer_das_than_folds(self):
        with pytest.raises(FoldError):
            make_folds(range(3), folds=5, validation_per_fold=1, seed=1)

    def test_validation_too_large(self):
        with pytest.raises(FoldError):
            make_folds(range(4), folds=2, validation_per_fold=2, seed=1)

    def test_partition_violation_detected(self):
        plan = make_folds(range(10), 2, 1, seed=1)
        plan.folds[1].test.append(plan.folds[0].test[0])
        with pytest.raises(FoldError):
            check_partition(plan, 10)

    def test_holdout_split(self):
        split = holdout_split(20, 4, seed=3)
        assert split.index == -1
        assert len(split.validation) == 4
        assert len(split.fit) == 16
        with pytest.raises(FoldError):
            holdout_split(3, 3, seed=3)

    def test_fold_seeds_differ(self):
        seeds = {fold_seed(1, k) for k in range(10)}
        assert len(seeds) == 10
        assert fold_seed(1, 0) == fold_seed(1, 0)


class TestExperimentConfig:
    """Experiment YAML loading and overrides."""

    def test_shipped_configs(self):
        default = load_config(CONFIG_DIR / "experiment.yaml")
        assert default.beam_sizes == [1, 5, 10, 100]
        assert default.folds == 10
        ci = load_config(CONFIG_DIR / "ci_profile.yaml")
        assert (ci.synthetic_das, ci.folds, ci.train.cell_size, ci.train.max_passes) == (50, 2, 64, 200)

    def test_beam_sizes_normalized(self):
        assert ExperimentConfig(beam_sizes=[10, 1, 10]).beam_sizes == [1, 10]
        with pytest.raises(ValueError):
            ExperimentConfig(beam_sizes=[0, 5])

    def test_folds_minimum(self):
        with pytest.raises(ValueError):
            ExperimentConfig(folds=1)

    def test_overrides(self):
        config = ExperimentConfig().with_overrides(seed=9, mode="tree")
        assert config.seed == 9
        assert config.train.seed == 9
        assert config.mode.value == "tree"

    def test_hash_names_run_dir(self, tmp_path):
        a = experiment_config(tmp_path)
        assert a.config_hash() == experiment_config(tmp_path).config_hash()
        b = a.with_overrides(seed=2)
        assert a.config_hash() != b.config_hash()
        assert a.run_dir().name == f"run-{a.config_hash()}"

    def test_missing_config(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "none.yaml")

    def test_invalid_config(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("folds: 1\n")
        with pytest.raises(ValueError) as exc_info:
            load_config(path)
        assert "Failed to load experiment config" in str(exc_info.value)

    def test_slot_patterns_need_mapping(self, tmp_path):
        path = tmp_path / "patterns.yaml"
        path.write_text("food=French: [french]\n")
        with pytest.raises(ValueError):
            load_slot_patterns(path)


class TestSynthesis:
    """Synthetic corpus generation."""

    @pytest.fixture(scope="class")
    def corpus(self, grammar, rules):
        return synthesize_corpus(grammar, 202, seed=1, rules=rules)

    def test_capacity(self, grammar):
        assert grammar.capacity() == 2664

    def test_sizes_and_distinct_das(self, corpus):
        assert len(corpus) == 202
        assert sum(len(i.refs) for i in corpus) == 404
        assert len({i.da for i in corpus}) == 202
        assert corpus[0].da_id == "da-0001"

    def test_paraphrases_distinct(self, corpus):
        for instance in corpus:
            assert instance.refs[0] != instance.refs[1]
            assert instance.has_trees()

    def test_das_parse(self, corpus):
        for instance in corpus:
            assert parse_da(instance.da.to_string()) == instance.da

    def test_references_have_no_slot_errors(self, corpus, slot_lexicon, rules):
        for instance in corpus:
            for ref in instance.refs:
                assert slot_errors(ref, instance.da, slot_lexicon, rules.plural_lexicon) == (0, 0, 0), ref

    def test_realizer_reproduces_references(self, corpus, rules):
        assert realization_mismatches(corpus, rules) == []

    def test_tokenization_round_trip(self, corpus, rules):
        for instance in corpus:
            for ref in instance.refs:
                assert detokenize(tokenize_sentence(ref, rules.plural_lexicon)) == ref

    def test_lexical_maps(self, corpus):
        for instance in corpus:
            assert set(instance.lex) == set(instance.da.placeholders())
            assert len(set(instance.lex.values())) == len(instance.lex)

    def test_byte_identical_files(self, tmp_path, grammar, rules):
        first = write_corpus(tmp_path / "a.jsonl", synthesize_corpus(grammar, 30, seed=4, rules=rules))
        second = write_corpus(tmp_path / "b.jsonl", synthesize_corpus(grammar, 30, seed=4, rules=rules))
        other = write_corpus(tmp_path / "c.jsonl", synthesize_corpus(grammar, 30, seed=5, rules=rules))
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes() != other.read_bytes()
        assert len(load_corpus(first)) == 30

    def test_inventory_too_small(self, grammar, rules):
        with pytest.raises(GrammarError):
            synthesize_corpus(grammar, grammar.capacity() + 1, seed=1, rules=rules)

    def test_grammar_validation(self, tmp_path):
        path = tmp_path / "grammar.yaml"
        path.write_text("frames: ['( be v:fin {mods} )']\nslots:\n  - name: food\n    values: [French]\n")
        with pytest.raises(ValueError) as exc_info:
            load_grammar(path)
        assert "no variants" in str(exc_info.value)


class TestSetups:
    """Setup naming and output text."""

    def test_setup_names(self):
        assert setup_names([1, 5, 100]) == ["greedy", "beam-5", "rerank-5", "beam-100", "rerank-100"]

    def test_parse_setup(self):
        assert parse_setup("greedy") == ("greedy", 1)
        assert parse_setup("rerank-10") == ("rerank", 10)
        with pytest.raises(ValueError):
            parse_setup("sample-5")

    def test_output_text(self, rules):
        assert output_text(["x", "is", "a", "restaurant", "."], "string", rules) == ("X is a restaurant.", 0)
        tokens = "( be v:fin ( x-name n:subj ) ( restaurant n:obj )".split()
        assert output_text(tokens, "tree", rules) == ("X is a restaurant.", 1)
        assert output_text([")"], "tree", rules) == ("", 1)

    def test_leakage_detected(self):
        check_leakage(["da-1", "da-2"], ["da-3"])
        with pytest.raises(LeakageError) as exc_info:
            check_leakage(["da-1", "da-2"], ["da-2", "da-3"], fold=4)
        assert exc_info.value.actual == ["da-2"]

    def test_train_command(self, tmp_path):
        ctx = make_context(experiment_config(tmp_path))
        ctx.config_path = "config/ci_profile.yaml"
        assert ctx.train_command(3, reranker=True) == \
            "nlg-experiment --config config/ci_profile.yaml --mode string train-reranker --fold 3"
        assert ctx.model_dir(None).name == "full"


@pytest.fixture(scope="module")
def small_run(tmp_path_factory, grammar, rules):
    """A two-fold cross-validation run on a 12-DA synthetic corpus."""
    root = tmp_path_factory.mktemp("cv")
    config = experiment_config(root)
    corpus = synthesize_corpus(grammar, 12, seed=1, rules=rules)
    ctx = make_context(config)
    plan = make_folds(corpus, config.folds, config.validation_das_per_fold, config.seed)
    return ctx, corpus, plan, run_cv(ctx, corpus, plan)


class TestCrossValidation:
    """End-to-end runner behaviour on tiny models."""

    def test_all_setups_succeed(self, small_run):
        _, corpus, _, cv = small_run
        assert [r.setup for r in cv.setups] == ["greedy", "beam-3", "rerank-3"]
        assert not cv.fold_errors
        for result in cv.setups:
            assert not result.failed, result.error
            assert sorted(o.da_id for o in result.outputs) == sorted(i.da_id for i in corpus)
            assert set(result.per_fold) == {0, 1}

    def test_models_record_training_das(self, small_run):
        ctx, corpus, plan, _ = small_run
        for fold in plan.folds:
            _, header = load_generator(ctx.model_dir(fold.index) / "generator.npz")
            assert header["training_da_ids"] == sorted(corpus[i].da_id for i in fold.fit)
            assert (ctx.model_dir(fold.index) / "reranker.npz").exists()
        assert (ctx.run_dir / "traces" / "trace_fold-00-generator.json").exists()

    def test_beam_of_one_matches_greedy(self, small_run):
        ctx, corpus, plan, cv = small_run
        greedy = {o.da_id: o for o in cv.setups[0].outputs}
        fold = plan.folds[0]
        models = self._models(ctx, fold)
        for i in fold.test:
            output = decode_instance(ctx, models, corpus[i], "beam-1", fold.index)
            assert output.tokens == greedy[corpus[i].da_id].tokens

    def test_zero_weight_rerank_matches_beam(self, small_run):
        ctx, corpus, plan, cv = small_run
        beam = {o.da_id: o for o in cv.setups[1].outputs}
        config = ctx.config.model_copy(update={"rerank": RerankConfig(penalty_weight=0.0)})
        zero_ctx = ExperimentContext(config, ctx.rules, ctx.run_dir, ctx.lexicon)
        fold = plan.folds[1]
        models = self._models(ctx, fold, with_reranker=True)
        for i in fold.test:
            output = decode_instance(zero_ctx, models, corpus[i], "rerank-3", fold.index)
            assert output.tokens == beam[corpus[i].da_id].tokens
            assert [e["rank"] for e in output.nbest] == list(range(len(output.nbest)))

    def test_evaluate_reuses_models(self, small_run):
        ctx, corpus, plan, cv = small_run
        again = run_cv(ctx, corpus, plan, train_missing=False)
        for first, second in zip(cv.setups, again.setups):
            assert first.report.to_dict() == second.report.to_dict()

    def test_missing_models_name_training_command(self, tmp_path, small_run):
        ctx, corpus, plan, _ = small_run
        fresh = ExperimentContext(ctx.config, ctx.rules, tmp_path / "empty-run", ctx.lexicon)
        with pytest.raises(MissingModelError) as exc_info:
            run_cv(fresh, corpus, plan, train_missing=False)
        assert "nlg-experiment --mode string train --fold 0" in str(exc_info.value)

    def test_leakage_aborts_setup(self, small_run, input_vocab, output_vocab):
        ctx, corpus, plan, _ = small_run
        params = GeneratorParams.initialize("string", input_vocab, output_vocab,
                                            TrainConfig(embedding_size=4, cell_size=4), np.random.default_rng(0))
        leaky = {f.index: FoldModels(params, None, [corpus[i].da_id for i in f.test]) for f in plan.folds}
        with pytest.raises(LeakageError):
            run_setup(ctx, corpus, plan, "greedy", leaky)

    def test_failed_setup_is_reported(self, small_run):
        ctx, corpus, plan, cv = small_run
        models = {f.index: self._models(ctx, f) for f in plan.folds}
        result = run_setup(ctx, corpus, plan, "rerank-3", models)
        assert result.failed
        assert "needs a reranker" in result.error

    def test_reports(self, tmp_path, small_run):
        ctx, corpus, _, cv = small_run
        first = write_reports(tmp_path / "a", cv, corpus, ctx.mode, "abc", ctx.plural_lexicon, 200, 1)
        second = write_reports(tmp_path / "b", cv, corpus, ctx.mode, "abc", ctx.plural_lexicon, 200, 1)
        for name, path in first.items():
            assert path.read_bytes() == second[name].read_bytes(), name
        lines = first["results_tsv"].read_text().splitlines()
        assert lines[0].split("\t") == COLUMNS
        assert [line.split("\t")[0] for line in lines[1:]] == ["greedy", "beam-3", "rerank-3"]
        summary = json.loads(first["results_json"].read_text())
        assert summary["aggregation"] == "pooled"
        assert set(summary["setups"][0]["folds"]) == {"0", "1"}
        significance = first["significance"].read_text().splitlines()
        assert len(significance) == 3
        assert significance[1].startswith("beam-3\tgreedy\t")

    def test_failed_rows_are_explicit(self, tmp_path, small_run):
        ctx, corpus, plan, cv = small_run
        models = {f.index: self._models(ctx, f) for f in plan.folds}
        failed = run_setup(ctx, corpus, plan, "rerank-3", models)
        cv_with_failure = CVResult(cv.plan, cv.setups[:2] + [failed], {})
        paths = write_reports(tmp_path, cv_with_failure, corpus, ctx.mode, "abc", ctx.plural_lexicon, 100, 1)
        last = paths["results_tsv"].read_text().splitlines()[-1].split("\t")
        assert last == ["rerank-3"] + ["failed"] * 5
        table = render_table(cv_with_failure)
        assert table.row_count == 3

    @staticmethod
    def _models(ctx, fold, with_reranker=False):
        from core.model_store import load_reranker
        generator, header = load_generator(ctx.model_dir(fold.index) / "generator.npz")
        reranker = load_reranker(ctx.model_dir(fold.index) / "reranker.npz")[0] if with_reranker else None
        return FoldModels(generator, reranker, header["training_da_ids"])


class TestTreeMode:
    """Tree-mode pipeline on tiny models."""

    def test_tree_mode_run(self, tmp_path, grammar, rules):
        config = experiment_config(tmp_path, mode="tree", beam_sizes=[1])
        corpus = synthesize_corpus(grammar, 8, seed=2, rules=rules)
        ctx = make_context(config)
        plan = make_folds(corpus, 2, 1, config.seed)
        cv = run_cv(ctx, corpus, plan)
        result = cv.setups[0]
        assert result.setup == "greedy"
        assert not result.failed, result.error
        assert all(o.text == "" or o.text.endswith((".", "!", "?")) for o in result.outputs)


@pytest.mark.slow
class TestCIProfile:
    """Reduced-profile acceptance run: trends and determinism."""

    def _run(self, root: Path, grammar, rules):
        base = load_config(CONFIG_DIR / "ci_profile.yaml")
        paths = base.paths.model_copy(update={
            "reports_dir": str(root), "corpus": str(root / "corpus.jsonl"),
            "rules": str(CONFIG_DIR / "realization_rules.yaml"),
            "slot_patterns": str(CONFIG_DIR / "slot_patterns.yaml"),
        })
        config = base.model_copy(update={"paths": paths})
        corpus = synthesize_corpus(grammar, config.synthetic_das, config.seed, rules)
        ctx = make_context(config)
        plan = make_folds(corpus, config.folds, config.validation_das_per_fold, config.seed)
        cv = run_cv(ctx, corpus, plan)
        return cv, write_reports(ctx.run_dir, cv, corpus, ctx.mode, "ci", ctx.plural_lexicon,
                                 config.bootstrap_iterations, config.seed)

    def test_trends_and_determinism(self, tmp_path, grammar, rules):
        cv, paths = self._run(tmp_path / "first", grammar, rules)
        scores = {r.setup: r.report for r in cv.setups}
        assert scores["greedy"].bleu < scores["beam-100"].bleu < scores["rerank-100"].bleu
        assert scores["rerank-100"].slot_error_total <= 0.8 * scores["beam-100"].slot_error_total

        _, again = self._run(tmp_path / "second", grammar, rules)
        for name, path in paths.items():
            assert path.read_bytes() == again[name].read_bytes(), name


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("NLG_BAGEL_CORPUS"), reason="NLG_BAGEL_CORPUS not set")
def test_bagel_scale_string_rerank():
    """Full 10-fold string-mode run on a user-supplied BAGEL corpus."""
    corpus_path = os.environ["NLG_BAGEL_CORPUS"]
    patterns = os.environ.get("NLG_BAGEL_SLOT_PATTERNS", str(CONFIG_DIR / "slot_patterns.yaml"))
    reports = Path(os.environ.get("NLG_BAGEL_REPORTS", "reports/bagel"))
    base = load_config(CONFIG_DIR / "experiment.yaml")
    config = base.model_copy(update={
        "beam_sizes": [100],
        "paths": base.paths.model_copy(update={"corpus": corpus_path, "slot_patterns": patterns,
                                               "reports_dir": str(reports)}),
    })
    corpus = load_corpus(corpus_path)
    ctx = make_context(config)
    plan = make_folds(corpus, config.folds, config.validation_das_per_fold, config.seed)
    cv = run_cv(ctx, corpus, plan, setups=["rerank-100"])
    report = cv.setups[0].report
    assert abs(report.bleu - 62.76) <= 5.0
    assert abs(report.nist - 5.669) <= 0.5
