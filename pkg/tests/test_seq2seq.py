"""
Tests for the encoder-decoder: attention, decoding, beam search and training.
"""

import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent.parent))

from core.config import TrainConfig
from core.corpus import TrainingPair, training_pairs
from core.data_model import GO_ID, STOP_ID, Vocabulary, encode_da, parse_da
from core.errors import ShapeError, TrainingError
from core.nn_kernel import gradient_check
from core.seq2seq import (
    GeneratorParams,
    ValidationItem,
    attend,
    batch_loss,
    beam_search,
    beam_search_core,
    decode_step,
    encode,
    greedy_decode,
    hypothesis_tokens,
    initial_decoder_state,
    restart_seeds,
    source_ids,
    train,
    validation_from_pairs,
)
from tools.experiment.synthesize import synthesize_corpus

DAS = [
    "inform(name=X-name, food=French)",
    "inform(name=X-name, food=Italian)",
    "inform(name=X-name)",
    "inform(food=French, food=Italian)",
]


def make_params(input_vocab, output_vocab, seed: int, mode: str = "string", scale: float = 0.3):
    config = TrainConfig(embedding_size=6, cell_size=8, attention_size=5, init_scale=scale)
    return GeneratorParams.initialize(mode, input_vocab, output_vocab, config, np.random.default_rng(seed))


class TableModel:
    """Deterministic toy step model: next-token distribution depends on the last token only."""

    go_id = 1
    stop_id = STOP_ID

    def __init__(self, seed: int, vocab_size: int = 6):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(vocab_size, vocab_size))
        logits[:, :2] = -np.inf
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        self.table = probs / probs.sum(axis=1, keepdims=True)

    def initial_state(self):
        return None

    def advance(self, states, last_tokens):
        return self.table[last_tokens], [None] * len(states)

    def sequence_log_prob(self, tokens):
        last, total = self.go_id, 0.0
        for tok in list(tokens) + [self.stop_id]:
            total += np.log(self.table[last, tok])
            last = tok
        return total


def exhaustive_best(model: TableModel, max_len: int):
    content = [3, 4, 5]
    best = None
    for length in range(max_len):
        for seq in itertools.product(content, repeat=length):
            score = model.sequence_log_prob(seq)
            if best is None or score > best[1]:
                best = (seq, score)
    return best


class TestBeamSearch:
    """Search behaviour on toy step models."""

    @pytest.mark.parametrize("seed", range(5))
    def test_wide_beam_is_exact(self, seed):
        model = TableModel(seed)
        pool = beam_search_core(model, beam_size=1000, max_len=4)
        finished = [h for h in pool if h.finished]
        best_seq, best_score = exhaustive_best(model, 4)
        assert finished[0].tokens == best_seq
        assert finished[0].log_prob == pytest.approx(best_score)

    @pytest.mark.parametrize("seed", range(5))
    def test_narrow_beam_scores_are_exact(self, seed):
        model = TableModel(seed)
        for h in beam_search_core(model, beam_size=3, max_len=5):
            if h.finished:
                assert h.log_prob == pytest.approx(model.sequence_log_prob(h.tokens))
                assert sum(h.step_log_probs) == pytest.approx(h.log_prob)

    @pytest.mark.parametrize("seed", range(3))
    def test_wide_beam_ranks_like_enumeration(self, seed):
        model = TableModel(seed)
        pool = beam_search_core(model, beam_size=100, max_len=3)
        found = [h.tokens for h in pool if h.finished and not set(h.tokens) & {0, 1}]
        content = [seq for length in range(3) for seq in itertools.product([3, 4, 5], repeat=length)]
        expected = sorted(content, key=lambda seq: -model.sequence_log_prob(seq))
        assert found == expected

    def test_pool_sorted_best_first(self):
        pool = beam_search_core(TableModel(3), beam_size=4, max_len=6)
        scores = [h.log_prob for h in pool]
        assert scores == sorted(scores, reverse=True)
        assert len(pool) <= 4

    def test_ties_broken_by_token_ids(self):
        model = TableModel(0)
        model.table[:, 2:] = 0.25
        model.table[:, :2] = 0.0
        pool = beam_search_core(model, beam_size=2, max_len=1)
        assert pool[0].finished and pool[0].tokens == ()
        assert pool[1].tokens == (3,) and pool[1].truncated

    def test_truncation_marked(self):
        model = TableModel(1)
        model.table[:, STOP_ID] = 0.0
        model.table /= model.table.sum(axis=1, keepdims=True)
        pool = beam_search_core(model, beam_size=2, max_len=3)
        assert all(h.truncated and not h.finished for h in pool)
        assert all(len(h.tokens) == 3 for h in pool)

    def test_invalid_beam_size(self):
        with pytest.raises(ValueError):
            beam_search_core(TableModel(0), beam_size=0, max_len=3)


class TestGenerator:
    """Forward pass of the attention encoder-decoder."""

    def test_shapes_checked(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 0)
        arrays = params.snapshot()
        arrays["proj_output"] = np.zeros((3, 3))
        with pytest.raises(ShapeError):
            GeneratorParams.from_arrays("string", input_vocab, output_vocab, arrays)

    def test_padding_does_not_change_encoding(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 1)
        short = source_ids(params, parse_da("inform(name=X-name)"))
        long = source_ids(params, parse_da("inform(name=X-name, food=French)"))
        alone = encode(params, short)
        batched = encode(params, [short, long])
        assert np.allclose(alone.final_h.value[0], batched.final_h.value[0])
        assert np.allclose(alone.hidden.value[0], batched.hidden.value[0, :len(short)])

    def test_attention_masks_padding(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 2)
        short = source_ids(params, parse_da("inform(name=X-name)"))
        long = source_ids(params, parse_da("inform(name=X-name, food=French)"))
        enc = encode(params, [short, long])
        alpha, context = attend(params, enc.final_h, enc)
        assert np.allclose(alpha.value.sum(axis=1), 1.0)
        assert np.allclose(alpha.value[0, len(short):], 0.0)
        assert context.shape == (2, params.cell_size)

    def test_step_distributions_sum_to_one(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 5, scale=1.0)
        enc = encode(params, [source_ids(params, parse_da(da)) for da in DAS[:2]])
        state = initial_decoder_state(params, enc)
        tokens = [GO_ID, GO_ID]
        for _ in range(4):
            dist, state = decode_step(params, tokens, state, enc)
            assert np.allclose(dist.value.sum(axis=1), 1.0)
            assert np.all(dist.value >= 0.0)
            tokens = dist.value.argmax(axis=1).tolist()

    def test_empty_input_rejected(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 0)
        with pytest.raises(ShapeError):
            encode(params, [])

    def test_unknown_source_tokens_use_unk(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 0)
        ids = source_ids(params, ["act:inform", "slot:phone", "val:X"])
        assert ids[1:] == [3, 3]

    def test_batch_loss_gradients(self, input_vocab, output_vocab, rng):
        params = make_params(input_vocab, output_vocab, 3, scale=0.5)
        pairs = [
            TrainingPair("a", encode_da(parse_da(DAS[0])), ["x", "is", "a", "french", "restaurant", "."]),
            TrainingPair("b", encode_da(parse_da(DAS[2])), ["x", "is", "a", "restaurant"]),
        ]
        failures = gradient_check(lambda: batch_loss(params, pairs), params.named_tensors(), rng,
                                  samples_per_tensor=2, abs_tolerance=1e-6)
        assert failures == []

    @pytest.mark.slow
    @pytest.mark.parametrize("mode", ["string", "tree"])
    def test_batch_loss_gradients_on_many_models(self, mode):
        source_tokens = ["act:inform"] + [f"slot:s{i}" for i in range(4)] + [f"val:v{i}" for i in range(6)]
        if mode == "string":
            target_tokens = [f"w{i}" for i in range(16)]
        else:
            target_tokens = ["(", ")"] + [f"l{i}" for i in range(8)] + [f"f:{i}" for i in range(6)]
        input_vocab, output_vocab = Vocabulary(source_tokens), Vocabulary(target_tokens)
        assert len(output_vocab) == 20
        config = TrainConfig(embedding_size=8, cell_size=12, init_scale=0.3)

        for seed in range(100):
            rng = np.random.default_rng(seed)
            params = GeneratorParams.initialize(mode, input_vocab, output_vocab, config, rng)
            pairs = []
            for i in range(3):
                source = ["act:inform"]
                for _ in range(int(rng.integers(1, 4))):
                    source += [f"slot:s{rng.integers(4)}", f"val:v{rng.integers(6)}"]
                if mode == "string":
                    target = [f"w{rng.integers(16)}" for _ in range(int(rng.integers(1, 9)))]
                else:
                    target = []
                    for _ in range(int(rng.integers(1, 3))):
                        target += ["(", f"l{rng.integers(8)}", f"f:{rng.integers(6)}", ")"]
                pairs.append(TrainingPair(f"da-{i}", source, target))
            failures = gradient_check(lambda: batch_loss(params, pairs), params.named_tensors(), rng,
                                      samples_per_tensor=2, abs_tolerance=1e-7)
            assert [f for f in failures if f[4] >= 1e-3] == [], f"seed {seed}"

    @pytest.mark.parametrize("mode", ["string", "tree"])
    def test_greedy_equals_beam_of_one(self, mode, input_vocab):
        outputs = {
            "string": ["x", "is", "a", "restaurant", "."],
            "tree": ["(", ")", "be", "v:fin", "x", "n:subj"],
        }
        output_vocab = Vocabulary(outputs[mode])
        rng = np.random.default_rng(99)
        for draw in range(50):
            params = make_params(input_vocab, output_vocab, draw, mode=mode, scale=1.0)
            da = parse_da(DAS[int(rng.integers(len(DAS)))])
            greedy = greedy_decode(params, da, max_len=8)
            best = beam_search(params, da, beam_size=1, max_len=8)[0]
            assert list(best.tokens) == greedy.ids
            assert best.log_prob == pytest.approx(greedy.log_prob)
            assert best.truncated == greedy.truncated
            assert hypothesis_tokens(params, best) == greedy.tokens

    def test_nbest_is_distinct(self, input_vocab, output_vocab):
        params = make_params(input_vocab, output_vocab, 4, scale=1.0)
        nbest = beam_search(params, parse_da(DAS[0]), beam_size=5, max_len=6)
        keys = [(h.tokens, h.finished) for h in nbest]
        assert len(nbest) == 5
        assert len(set(keys)) == 5


class TestTraining:
    """Training protocol and model selection."""

    def _pairs(self):
        refs = {
            DAS[0]: [["x", "is", "a", "french", "restaurant", "."]],
            DAS[1]: [["x", "is", "an", "italian", "restaurant", "."]],
            DAS[2]: [["x", "is", "a", "restaurant", "."]],
        }
        return [TrainingPair(f"da-{i}", encode_da(parse_da(da)), target)
                for i, (da, targets) in enumerate(refs.items()) for target in targets]

    def test_empty_corpus(self, tiny_config):
        with pytest.raises(TrainingError):
            train([], [], tiny_config, "string")

    def test_restart_seeds(self):
        seeds = restart_seeds(5, 4)
        assert seeds == restart_seeds(5, 4)
        assert len(set(seeds)) == 4
        assert restart_seeds(6, 4) != seeds

    def test_validation_grouped_by_da(self):
        pairs = self._pairs() + [TrainingPair("da-0", ["act:inform"], ["x", "."])]
        items = validation_from_pairs(pairs)
        assert len(items) == 3
        assert len(items[0].references) == 2

    def test_train_reports_restarts(self, tiny_config):
        config = tiny_config.model_copy(update={"restarts": 2})
        params, report = train(self._pairs(), [], config, "string")
        assert len(report.restarts) == 2
        assert report.selected_restart in (0, 1)
        assert all(r.status == "success" for r in report.restarts)
        assert "french" in params.output_vocab
        summary = report.to_dict()
        assert "history" not in summary["restarts"][0]

    def test_training_is_deterministic(self, tiny_config):
        validation = [ValidationItem(encode_da(parse_da(DAS[0])), [["x", "is", "a", "french", "restaurant", "."]])]
        first, report_a = train(self._pairs(), validation, tiny_config, "string")
        second, report_b = train(self._pairs(), validation, tiny_config, "string")
        assert report_a.to_dict() == report_b.to_dict()
        for name, value in first.snapshot().items():
            assert np.array_equal(value, second.snapshot()[name])

    @pytest.mark.slow
    def test_memorizes_small_corpus(self):
        config = TrainConfig(embedding_size=16, cell_size=32, batch_size=3, max_passes=300, patience_passes=300,
                             restarts=1, seed=3, learning_rate=0.01, max_decode_length=12)
        pairs = self._pairs()
        params, report = train(pairs, [], config, "string")
        assert report.best_validation_bleu == pytest.approx(100.0)
        for pair in pairs:
            assert greedy_decode(params, pair.source, 12).tokens == pair.target

    @pytest.mark.slow
    def test_memorizes_synthetic_corpus(self, grammar, rules):
        instances = synthesize_corpus(grammar, 20, seed=2, rules=rules)
        pairs = training_pairs(instances, "string", rules.plural_lexicon)[::2]
        assert len(pairs) == 20
        config = TrainConfig(embedding_size=32, cell_size=64, batch_size=10, max_passes=500, patience_passes=500,
                             restarts=1, seed=5, learning_rate=0.01)
        _, report = train(pairs, validation_from_pairs(pairs), config, "string")
        assert report.best_validation_bleu >= 99.0
