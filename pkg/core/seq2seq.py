"""
Seq2seq Generator

Attention LSTM encoder-decoder mapping encoded dialogue acts to output token
sequences (sentences or bracketed trees): encoding, attention, single decoder
steps, greedy decoding, beam search, and the training protocol with
validation-BLEU model selection, early stopping and random restarts.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .config import TrainConfig
from .corpus import TrainingPair
from .data_model import (
    GO_ID,
    PAD_ID,
    STOP_ID,
    DialogueAct,
    Vocabulary,
    build_vocabulary,
    encode_da,
)
from .errors import ShapeError, TrainingError, VocabularyError
from .evaluation import bleu
from .log_utils import get_logger
from .nn_kernel import (
    AdamState,
    GradientTape,
    LstmCellParams,
    Tensor,
    add,
    adam_update,
    backward,
    concat,
    cross_entropy,
    lstm_step,
    masked_update,
    matmul,
    mul,
    reduce_sum,
    reshape,
    softmax,
    stack,
    take_rows,
    tanh,
    uniform_init,
)
from .training_trace_logger import RestartStatus, TrainingTraceLogger

logger = get_logger("nlg.seq2seq")

LOG_FLOOR = 1e-300
MASK_OFFSET = -1e9

Source = Union[DialogueAct, Sequence[str]]


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class GeneratorParams:
    """All learned arrays of the encoder-decoder plus its vocabularies."""
    mode: str
    input_vocab: Vocabulary
    output_vocab: Vocabulary
    input_embedding: Tensor
    output_embedding: Tensor
    encoder: LstmCellParams
    decoder: LstmCellParams
    attn_state: Tensor
    attn_encoder: Tensor
    attn_vector: Tensor
    proj_input: Tensor
    proj_output: Tensor
    zero_init_decoder_cell: bool = False
    sort_triples: bool = False

    def __post_init__(self):
        e = self.embedding_size
        h = self.cell_size
        a = self.attention_size
        expected = {
            "input_embedding": (len(self.input_vocab), e),
            "output_embedding": (len(self.output_vocab), e),
            "attn_state": (h, a),
            "attn_encoder": (h, a),
            "attn_vector": (a,),
            "proj_input": (e + h, e),
            "proj_output": (2 * h, len(self.output_vocab)),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ShapeError("Generator tensor has wrong shape", field=name, expected=shape, actual=actual)
        for name, cell in (("encoder", self.encoder), ("decoder", self.decoder)):
            if (cell.input_size, cell.hidden_size) != (e, h):
                raise ShapeError("LSTM sizes disagree with embedding/cell size", field=name,
                                 expected=(e, h), actual=(cell.input_size, cell.hidden_size))

    @property
    def embedding_size(self) -> int:
        return self.input_embedding.shape[1]

    @property
    def cell_size(self) -> int:
        return self.encoder.hidden_size

    @property
    def attention_size(self) -> int:
        return self.attn_vector.shape[0]

    def named_tensors(self) -> Dict[str, Tensor]:
        tensors = {
            "input_embedding": self.input_embedding,
            "output_embedding": self.output_embedding,
            "attn_state": self.attn_state,
            "attn_encoder": self.attn_encoder,
            "attn_vector": self.attn_vector,
            "proj_input": self.proj_input,
            "proj_output": self.proj_output,
        }
        tensors.update(self.encoder.named_tensors("encoder"))
        tensors.update(self.decoder.named_tensors("decoder"))
        return tensors

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.named_tensors().items()}

    @classmethod
    def from_arrays(cls, mode: str, input_vocab: Vocabulary, output_vocab: Vocabulary,
                    arrays: Dict[str, np.ndarray], zero_init_decoder_cell: bool = False,
                    sort_triples: bool = False) -> "GeneratorParams":
        def cell(prefix: str) -> LstmCellParams:
            w_ih = arrays[f"{prefix}.weight_ih"]
            return LstmCellParams(
                input_size=w_ih.shape[0],
                hidden_size=arrays[f"{prefix}.weight_hh"].shape[0],
                weight_ih=Tensor(w_ih),
                weight_hh=Tensor(arrays[f"{prefix}.weight_hh"]),
                bias=Tensor(arrays[f"{prefix}.bias"]),
            )

        return cls(
            mode=mode,
            input_vocab=input_vocab,
            output_vocab=output_vocab,
            input_embedding=Tensor(arrays["input_embedding"]),
            output_embedding=Tensor(arrays["output_embedding"]),
            encoder=cell("encoder"),
            decoder=cell("decoder"),
            attn_state=Tensor(arrays["attn_state"]),
            attn_encoder=Tensor(arrays["attn_encoder"]),
            attn_vector=Tensor(arrays["attn_vector"]),
            proj_input=Tensor(arrays["proj_input"]),
            proj_output=Tensor(arrays["proj_output"]),
            zero_init_decoder_cell=zero_init_decoder_cell,
            sort_triples=sort_triples,
        )

    @classmethod
    def initialize(cls, mode: str, input_vocab: Vocabulary, output_vocab: Vocabulary,
                   config: TrainConfig, rng: np.random.Generator) -> "GeneratorParams":
        e, h, a = config.embedding_size, config.cell_size, config.attention_width()
        s = config.init_scale
        return cls(
            mode=mode,
            input_vocab=input_vocab,
            output_vocab=output_vocab,
            input_embedding=Tensor(uniform_init(rng, (len(input_vocab), e), s)),
            output_embedding=Tensor(uniform_init(rng, (len(output_vocab), e), s)),
            encoder=LstmCellParams.initialize(e, h, rng, s),
            decoder=LstmCellParams.initialize(e, h, rng, s),
            attn_state=Tensor(uniform_init(rng, (h, a), s)),
            attn_encoder=Tensor(uniform_init(rng, (h, a), s)),
            attn_vector=Tensor(uniform_init(rng, (a,), s)),
            proj_input=Tensor(uniform_init(rng, (e + h, e), s)),
            proj_output=Tensor(uniform_init(rng, (2 * h, len(output_vocab)), s)),
            zero_init_decoder_cell=config.zero_init_decoder_cell,
            sort_triples=config.canonical_da_order,
        )


# ---------------------------------------------------------------------------
# Forward computation
# ---------------------------------------------------------------------------

@dataclass
class EncoderStates:
    """Encoder outputs for a batch; padded positions have mask 0."""
    hidden: Tensor
    keys: Tensor
    mask: np.ndarray
    final_h: Tensor
    final_c: Tensor

    def __len__(self) -> int:
        return self.hidden.shape[1]

    def select(self, rows: Sequence[int]) -> "EncoderStates":
        """Constant copy of some batch rows, for decoding without gradients."""
        idx = np.asarray(rows, dtype=np.int64)
        return EncoderStates(
            hidden=Tensor(self.hidden.value[idx]),
            keys=Tensor(self.keys.value[idx]),
            mask=self.mask[idx],
            final_h=Tensor(self.final_h.value[idx]),
            final_c=Tensor(self.final_c.value[idx]),
        )


@dataclass
class DecoderState:
    """Decoder hidden state s_t, memory cell, and the last attention result."""
    s: Tensor
    c: Tensor
    context: Optional[Tensor] = None
    alpha: Optional[Tensor] = None


def pad_batch(sequences: Sequence[Sequence[int]], pad_id: int = PAD_ID) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences; returns (ids, mask)."""
    width = max(len(s) for s in sequences)
    ids = np.full((len(sequences), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(sequences), width))
    for i, seq in enumerate(sequences):
        ids[i, :len(seq)] = seq
        mask[i, :len(seq)] = 1.0
    return ids, mask


def _as_batch(inputs) -> List[List[int]]:
    if len(inputs) and isinstance(inputs[0], (int, np.integer)):
        return [[int(i) for i in inputs]]
    return [[int(i) for i in seq] for seq in inputs]


def encode(params: GeneratorParams, inputs: Union[Sequence[int], Sequence[Sequence[int]]]) -> EncoderStates:
    """Run the encoder LSTM left to right from a zero state.

    Accepts one id sequence or a batch of them.
    """
    batch = _as_batch(inputs)
    if not batch or any(len(seq) == 0 for seq in batch):
        raise ShapeError("Encoder input sequence is empty")
    ids, mask = pad_batch(batch)
    if ids.max() >= len(params.input_vocab) or ids.min() < 0:
        raise VocabularyError("Input token id outside the input vocabulary",
                              expected=f"[0, {len(params.input_vocab)})", actual=int(ids.max()))
    n_batch, length = ids.shape
    h = Tensor(np.zeros((n_batch, params.cell_size)))
    c = Tensor(np.zeros((n_batch, params.cell_size)))
    outputs = []
    for t in range(length):
        x = take_rows(params.input_embedding, ids[:, t])
        h_new, c_new = lstm_step(params.encoder, x, h, c)
        m = mask[:, t:t + 1]
        if m.all():
            h, c = h_new, c_new
        else:
            h = masked_update(m, h_new, h)
            c = masked_update(m, c_new, c)
        outputs.append(h)
    hidden = stack(outputs, axis=1)
    keys = matmul(hidden, params.attn_encoder)
    return EncoderStates(hidden=hidden, keys=keys, mask=mask, final_h=h, final_c=c)


def attend(params: GeneratorParams, s_prev: Tensor, enc: EncoderStates) -> Tuple[Tensor, Tensor]:
    """Alignment weights over encoder positions and the context vector."""
    n_batch, length, width = enc.keys.shape
    query = reshape(matmul(s_prev, params.attn_state), (n_batch, 1, width))
    energy = tanh(add(enc.keys, query))
    scores = reshape(matmul(energy, reshape(params.attn_vector, (width, 1))), (n_batch, length))
    if not enc.mask.all():
        scores = add(scores, (1.0 - enc.mask) * MASK_OFFSET)
    alpha = softmax(scores)
    context = reduce_sum(mul(reshape(alpha, (n_batch, length, 1)), enc.hidden), axis=1)
    return alpha, context


def initial_decoder_state(params: GeneratorParams, enc: EncoderStates) -> DecoderState:
    """s_0 = h_n; the memory cell is carried over unless zero-init is configured."""
    if params.zero_init_decoder_cell:
        return DecoderState(enc.final_h, Tensor(np.zeros(enc.final_c.shape)))
    return DecoderState(enc.final_h, enc.final_c)


def decode_step(params: GeneratorParams, y_prev: Union[int, Sequence[int]], state: DecoderState,
                enc: EncoderStates) -> Tuple[Tensor, DecoderState]:
    """One decoder step for a batch: distribution over the output vocabulary and the new state."""
    ids = np.atleast_1d(np.asarray(y_prev, dtype=np.int64))
    if ids.min() < 0 or ids.max() >= len(params.output_vocab):
        raise VocabularyError("Unknown output token id", expected=f"[0, {len(params.output_vocab)})",
                              actual=ids.tolist())
    alpha, context = attend(params, state.s, enc)
    embedded = take_rows(params.output_embedding, ids)
    x = matmul(concat([embedded, context]), params.proj_input)
    s, c = lstm_step(params.decoder, x, state.s, state.c)
    distribution = softmax(matmul(concat([s, context]), params.proj_output))
    return distribution, DecoderState(s, c, context, alpha)


def source_ids(params: GeneratorParams, source: Source) -> List[int]:
    tokens = encode_da(source, params.sort_triples) if isinstance(source, DialogueAct) else list(source)
    unknown = params.input_vocab.unknown(tokens)
    if unknown:
        logger.debug(f"Input tokens mapped to UNK: {unknown}")
    return params.input_vocab.to_ids(tokens)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

@dataclass
class Hypothesis:
    """A partial or finished output with its accumulated log probability."""
    tokens: Tuple[int, ...]
    log_prob: float
    state: Any = None
    finished: bool = False
    truncated: bool = False
    step_log_probs: Tuple[float, ...] = ()

    def sort_key(self, stop_id: int = STOP_ID) -> Tuple[float, Tuple[int, ...]]:
        ids = self.tokens + ((stop_id,) if self.finished else ())
        return -self.log_prob, ids


class StepModel(Protocol):
    """Anything beam search can expand: a start state and a batched step."""
    go_id: int
    stop_id: int

    def initial_state(self) -> Any:
        ...

    def advance(self, states: List[Any], last_tokens: List[int]) -> Tuple[np.ndarray, List[Any]]:
        ...


class GeneratorStepModel:
    """Adapts a trained generator and one encoded input to StepModel."""

    go_id = GO_ID
    stop_id = STOP_ID

    def __init__(self, params: GeneratorParams, enc: EncoderStates):
        self.params = params
        self.enc = enc
        self._tiled: Dict[int, EncoderStates] = {}

    def initial_state(self) -> Tuple[np.ndarray, np.ndarray]:
        start = initial_decoder_state(self.params, self.enc)
        return start.s.value[0], start.c.value[0]

    def _encoder_rows(self, n: int) -> EncoderStates:
        if n not in self._tiled:
            self._tiled[n] = self.enc.select([0] * n)
        return self._tiled[n]

    def advance(self, states, last_tokens):
        s = Tensor(np.stack([st[0] for st in states]))
        c = Tensor(np.stack([st[1] for st in states]))
        dist, new = decode_step(self.params, last_tokens, DecoderState(s, c), self._encoder_rows(len(states)))
        return dist.value, [(new.s.value[i], new.c.value[i]) for i in range(len(states))]


def beam_search_core(model: StepModel, beam_size: int, max_len: int) -> List[Hypothesis]:
    """Global top-k beam search; finished hypotheses stay in the pool.

    Each step expands every live hypothesis over the whole vocabulary and keeps
    the best beam_size of finished and new hypotheses, ordered by log
    probability and then by token ids. Search ends when nothing is live or
    after max_len steps (STOP counts as a step); survivors are marked truncated.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be at least 1, got {beam_size}")
    pool = [Hypothesis(tokens=(), log_prob=0.0, state=model.initial_state())]
    for _ in range(max_len):
        live = [h for h in pool if not h.finished]
        if not live:
            break
        last = [h.tokens[-1] if h.tokens else model.go_id for h in live]
        probs, states = model.advance([h.state for h in live], last)
        logp = np.log(np.maximum(probs, LOG_FLOOR))
        scores = np.array([h.log_prob for h in live])[:, None] + logp
        flat = scores.ravel()
        k = min(beam_size, flat.size)
        threshold = -np.partition(-flat, k - 1)[k - 1]
        rows, cols = np.nonzero(scores >= threshold)

        candidates = [h for h in pool if h.finished]
        for r, tok in zip(rows.tolist(), cols.tolist()):
            parent = live[r]
            done = tok == model.stop_id
            candidates.append(Hypothesis(
                tokens=parent.tokens if done else parent.tokens + (tok,),
                log_prob=float(scores[r, tok]),
                state=None if done else states[r],
                finished=done,
                step_log_probs=parent.step_log_probs + (float(logp[r, tok]),),
            ))
        candidates.sort(key=lambda h: h.sort_key(model.stop_id))
        pool = candidates[:beam_size]

    for h in pool:
        if not h.finished:
            h.truncated = True
    return pool


@dataclass
class DecodeResult:
    """A decoded output sequence without GO/STOP."""
    ids: List[int]
    tokens: List[str]
    log_prob: float
    truncated: bool


def _step_model(params: GeneratorParams, source: Source) -> GeneratorStepModel:
    return GeneratorStepModel(params, encode(params, source_ids(params, source)))


def greedy_decode(params: GeneratorParams, source: Source, max_len: int) -> DecodeResult:
    """Follow the most probable token (lowest id on ties) until STOP or max_len."""
    model = _step_model(params, source)
    state = model.initial_state()
    last = GO_ID
    ids: List[int] = []
    log_prob = 0.0
    truncated = True
    for _ in range(max_len):
        probs, states = model.advance([state], [last])
        scores = log_prob + np.log(np.maximum(probs[0], LOG_FLOOR))
        tok = int(np.argmax(scores))
        log_prob = float(scores[tok])
        if tok == STOP_ID:
            truncated = False
            break
        ids.append(tok)
        state, last = states[0], tok
    if truncated:
        logger.debug(f"Greedy decoding truncated at {max_len} steps")
    return DecodeResult(ids, params.output_vocab.to_tokens(ids), log_prob, truncated)


def beam_search(params: GeneratorParams, source: Source, beam_size: int, max_len: int) -> List[Hypothesis]:
    """n-best list for one input, best first."""
    return beam_search_core(_step_model(params, source), beam_size, max_len)


def hypothesis_tokens(params: GeneratorParams, hypothesis: Hypothesis) -> List[str]:
    return params.output_vocab.to_tokens(hypothesis.tokens)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class ValidationItem:
    """A held-out input with every reference target sequence."""
    source: List[str]
    references: List[List[str]]


@dataclass
class PassRecord:
    pass_no: int
    loss: float
    validation_bleu: float
    rejected_updates: int = 0


@dataclass
class RestartReport:
    """Outcome of one randomly initialized training run."""
    restart: int
    seed: int
    status: str
    passes_run: int = 0
    best_pass: int = 0
    best_validation_bleu: float = -1.0
    stop_reason: str = ""
    error: Optional[str] = None
    history: List[PassRecord] = field(default_factory=list)


@dataclass
class TrainingReport:
    """Summary of all restarts and the selected one."""
    mode: str
    selected_restart: int
    best_validation_bleu: float
    restarts: List[RestartReport] = field(default_factory=list)

    def to_dict(self) -> Dict:
        """Deterministic summary without per-pass history."""
        return {
            "mode": self.mode,
            "selected_restart": self.selected_restart,
            "best_validation_bleu": round(self.best_validation_bleu, 4),
            "restarts": [
                {k: v for k, v in asdict(r).items() if k != "history"} for r in self.restarts
            ],
        }


def batch_loss(params: GeneratorParams, pairs: Sequence[TrainingPair]) -> Tensor:
    """Cross-entropy of the gold targets plus STOP, feeding gold previous tokens to the decoder."""
    sources = [params.input_vocab.to_ids(p.source) for p in pairs]
    targets = [params.output_vocab.to_ids(p.target) for p in pairs]
    enc = encode(params, sources)
    state = initial_decoder_state(params, enc)
    inputs, mask = pad_batch([[GO_ID] + t for t in targets])
    outputs, _ = pad_batch([t + [STOP_ID] for t in targets])
    loss = None
    for step in range(inputs.shape[1]):
        dist, state = decode_step(params, inputs[:, step], state, enc)
        term = cross_entropy(dist, outputs[:, step], mask[:, step])
        loss = term if loss is None else add(loss, term)
    return loss


def validation_from_pairs(pairs: Sequence[TrainingPair]) -> List[ValidationItem]:
    grouped: Dict[str, ValidationItem] = {}
    for p in pairs:
        item = grouped.setdefault(p.da_id, ValidationItem(list(p.source), []))
        item.references.append(list(p.target))
    return list(grouped.values())


def validation_bleu(params: GeneratorParams, validation: Sequence[ValidationItem], max_len: int) -> float:
    """Greedy decoding of the validation inputs scored against all references."""
    hyps = [greedy_decode(params, item.source, max_len).tokens for item in validation]
    return bleu(hyps, [item.references for item in validation])


def _train_restart(pairs: Sequence[TrainingPair], validation: Sequence[ValidationItem], config: TrainConfig,
                   mode: str, input_vocab: Vocabulary, output_vocab: Vocabulary, restart: int, seed: int,
                   trace: Optional[TrainingTraceLogger]) -> Tuple[RestartReport, Optional[Dict[str, np.ndarray]]]:
    rng = np.random.default_rng(seed)
    params = GeneratorParams.initialize(mode, input_vocab, output_vocab, config, rng)
    tensors = params.named_tensors()
    adam = AdamState(learning_rate=config.learning_rate)
    max_len = config.decode_length(mode)
    report = RestartReport(restart=restart, seed=seed, status=RestartStatus.RUNNING.value)
    if trace:
        trace.start_restart(restart, seed)

    snapshot: Optional[Dict[str, np.ndarray]] = None
    top: List[float] = []
    unchanged = 0
    report.stop_reason = "max_passes"
    for pass_no in range(1, config.max_passes + 1):
        order = rng.permutation(len(pairs))
        total_loss = 0.0
        rejected = 0
        for start in range(0, len(order), config.batch_size):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            with GradientTape() as tape:
                tape.watch(*tensors.values())
                loss = batch_loss(params, batch)
            value = float(loss.value)
            if not np.isfinite(value):
                report.status = RestartStatus.ABORTED.value
                report.stop_reason = "diverged"
                report.error = f"Non-finite loss in pass {pass_no}"
                report.passes_run = pass_no
                logger.error(f"Restart {restart} aborted: {report.error}")
                if trace:
                    trace.complete_restart(restart, RestartStatus.ABORTED, stop_reason="diverged", error=report.error)
                return report, None
            grads = backward(tape, loss).for_params(tensors)
            if not adam_update(tensors, grads, adam):
                rejected += 1
            total_loss += value

        score = validation_bleu(params, validation, max_len)
        report.history.append(PassRecord(pass_no, total_loss, score, rejected))
        report.passes_run = pass_no
        if trace:
            trace.record_pass(restart, pass_no, total_loss, score, rejected)
        if score > report.best_validation_bleu:
            report.best_validation_bleu = score
            report.best_pass = pass_no
            snapshot = params.snapshot()

        new_top = sorted(top + [score], reverse=True)[:config.top_k_tracked]
        unchanged = unchanged + 1 if new_top == top else 0
        top = new_top
        if unchanged >= config.patience_passes:
            report.stop_reason = "early_stop"
            break
        logger.debug(f"Restart {restart} pass {pass_no}: loss={total_loss:.4f} bleu={score:.2f}")

    report.status = RestartStatus.SUCCESS.value
    logger.info(f"Restart {restart} finished after {report.passes_run} passes "
                f"({report.stop_reason}); best BLEU {report.best_validation_bleu:.2f} at pass {report.best_pass}")
    if trace:
        trace.complete_restart(restart, RestartStatus.SUCCESS, report.best_pass, report.best_validation_bleu,
                               report.stop_reason)
    return report, snapshot


def restart_seeds(seed: int, restarts: int) -> List[int]:
    """Independent per-restart seeds derived from one base seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(restarts)]


def train(pairs: Sequence[TrainingPair], validation: Sequence[ValidationItem], config: TrainConfig, mode: str,
          trace: Optional[TrainingTraceLogger] = None) -> Tuple[GeneratorParams, TrainingReport]:
    """Train with random restarts and keep the best-validation-BLEU snapshot.

    Raises:
        TrainingError: on an empty corpus or when every restart diverges
    """
    if not pairs:
        raise TrainingError("Training corpus is empty")
    input_vocab = build_vocabulary(p.source for p in pairs)
    output_vocab = build_vocabulary(p.target for p in pairs)
    if not validation:
        logger.warning("No validation set given; selecting models on the training inputs")
        validation = validation_from_pairs(pairs)
    logger.info(f"Training {mode} generator on {len(pairs)} pairs, {len(validation)} validation inputs, "
                f"vocabularies {len(input_vocab)}/{len(output_vocab)}, {config.restarts} restarts")

    jobs = list(enumerate(restart_seeds(config.seed, config.restarts)))

    def run(job):
        restart, seed = job
        return _train_restart(pairs, validation, config, mode, input_vocab, output_vocab, restart, seed, trace)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    finished = [(r, snap) for r, snap in results if snap is not None]
    if not finished:
        raise TrainingError("Every training restart diverged", actual=[r.error for r, _ in results])
    best_report, best_snapshot = max(finished, key=lambda item: (item[0].best_validation_bleu, -item[0].restart))
    params = GeneratorParams.from_arrays(mode, input_vocab, output_vocab, best_snapshot,
                                         zero_init_decoder_cell=config.zero_init_decoder_cell,
                                         sort_triples=config.canonical_da_order)
    report = TrainingReport(mode=mode, selected_restart=best_report.restart,
                            best_validation_bleu=best_report.best_validation_bleu,
                            restarts=[r for r, _ in results])
    return params, report
