"""
Reranker

LSTM classifier predicting which act types and slot-value pairs a candidate
output expresses, and the n-best rescoring that subtracts a weighted content
mismatch penalty from each candidate's log probability.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import PenaltyMode, RerankConfig, TrainConfig
from .data_model import DialogueAct, Vocabulary, build_vocabulary, parse_bracketed, tree_to_flat
from .errors import ShapeError, TrainingError, TreeParseError
from .log_utils import get_logger
from .nn_kernel import (
    AdamState,
    GradientTape,
    LstmCellParams,
    Tensor,
    adam_update,
    add,
    backward,
    binary_cross_entropy,
    lstm_step,
    masked_update,
    matmul,
    sigmoid,
    take_rows,
    uniform_init,
)
from .seq2seq import pad_batch
from .training_trace_logger import RestartStatus, TrainingTraceLogger

logger = get_logger("nlg.reranker")


@dataclass(frozen=True)
class ClassInventory:
    """Act types then slot=value pairs seen in training, each sorted."""
    classes: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("Class inventory contains duplicates")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.classes)})

    def __len__(self) -> int:
        return len(self.classes)

    def index(self, cls: str) -> Optional[int]:
        return self._index.get(cls)

    @classmethod
    def from_das(cls, das: Iterable[DialogueAct]) -> "ClassInventory":
        acts, pairs = set(), set()
        for da in das:
            acts.update(da.act_types)
            pairs.update(da.slot_value_classes())
        return cls(tuple(sorted(acts)) + tuple(sorted(pairs)))


def da_to_content_vector(da: DialogueAct, inventory: ClassInventory) -> Tuple[np.ndarray, int]:
    """Presence vector of the DA's act types and slot-value pairs.

    Returns:
        (vector, number of DA classes missing from the inventory)
    """
    vector = np.zeros(len(inventory), dtype=np.int8)
    out_of_inventory = 0
    for cls in da.act_types + da.slot_value_classes():
        idx = inventory.index(cls)
        if idx is None:
            out_of_inventory += 1
        else:
            vector[idx] = 1
    return vector, out_of_inventory


def hamming_penalty(o: np.ndarray, d: np.ndarray) -> int:
    o, d = np.asarray(o), np.asarray(d)
    if o.shape != d.shape:
        raise ShapeError("Content vectors differ in length", expected=d.shape, actual=o.shape)
    return int(np.sum(o != d))


def expected_penalty(probs: np.ndarray, d: np.ndarray) -> float:
    """Expected Hamming distance when each bit is drawn from its probability."""
    probs, d = np.asarray(probs, dtype=np.float64), np.asarray(d)
    if probs.shape != d.shape:
        raise ShapeError("Content vectors differ in length", expected=d.shape, actual=probs.shape)
    return float(np.sum(np.abs(probs - d)))


def reranker_input(tokens: Sequence[str], mode: str) -> List[str]:
    """Classifier input for a decoder output: sentence tokens, or a flattened tree."""
    if mode != "tree":
        return list(tokens)
    if not tokens:
        return []
    try:
        return tree_to_flat(parse_bracketed(tokens).tree)
    except TreeParseError:
        return []


@dataclass
class RerankerParams:
    """Classifier weights: embeddings, LSTM encoder, W_R and b."""
    mode: str
    vocab: Vocabulary
    inventory: ClassInventory
    embedding: Tensor
    encoder: LstmCellParams
    projection: Tensor
    bias: Tensor

    def __post_init__(self):
        expected = {
            "embedding": (len(self.vocab), self.encoder.input_size),
            "projection": (self.encoder.hidden_size, len(self.inventory)),
            "bias": (len(self.inventory),),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ShapeError("Reranker tensor has wrong shape", field=name, expected=shape, actual=actual)

    def named_tensors(self) -> Dict[str, Tensor]:
        tensors = {"embedding": self.embedding, "projection": self.projection, "bias": self.bias}
        tensors.update(self.encoder.named_tensors("encoder"))
        return tensors

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.named_tensors().items()}

    @classmethod
    def from_arrays(cls, mode: str, vocab: Vocabulary, inventory: ClassInventory,
                    arrays: Dict[str, np.ndarray]) -> "RerankerParams":
        return cls(
            mode=mode,
            vocab=vocab,
            inventory=inventory,
            embedding=Tensor(arrays["embedding"]),
            encoder=LstmCellParams(
                input_size=arrays["encoder.weight_ih"].shape[0],
                hidden_size=arrays["encoder.weight_hh"].shape[0],
                weight_ih=Tensor(arrays["encoder.weight_ih"]),
                weight_hh=Tensor(arrays["encoder.weight_hh"]),
                bias=Tensor(arrays["encoder.bias"]),
            ),
            projection=Tensor(arrays["projection"]),
            bias=Tensor(arrays["bias"]),
        )

    @classmethod
    def initialize(cls, mode: str, vocab: Vocabulary, inventory: ClassInventory, config: TrainConfig,
                   rng: np.random.Generator) -> "RerankerParams":
        e, h, s = config.embedding_size, config.cell_size, config.init_scale
        return cls(
            mode=mode,
            vocab=vocab,
            inventory=inventory,
            embedding=Tensor(uniform_init(rng, (len(vocab), e), s)),
            encoder=LstmCellParams.initialize(e, h, rng, s),
            projection=Tensor(uniform_init(rng, (h, len(inventory)), s)),
            bias=Tensor(uniform_init(rng, (len(inventory),), s)),
        )


def _class_probabilities(params: RerankerParams, candidates: Sequence[Sequence[str]]) -> Tensor:
    """o = sigmoid(h_n W_R + b) for a batch; empty candidates keep h_n = 0."""
    ids, mask = pad_batch([params.vocab.to_ids(c) for c in candidates])
    n_batch = len(candidates)
    h = Tensor(np.zeros((n_batch, params.encoder.hidden_size)))
    c = Tensor(np.zeros((n_batch, params.encoder.hidden_size)))
    for t in range(ids.shape[1]):
        x = take_rows(params.embedding, ids[:, t])
        h_new, c_new = lstm_step(params.encoder, x, h, c)
        m = mask[:, t:t + 1]
        if m.all():
            h, c = h_new, c_new
        else:
            h = masked_update(m, h_new, h)
            c = masked_update(m, c_new, c)
    return sigmoid(add(matmul(h, params.projection), params.bias))


@dataclass
class Classification:
    """Class probabilities and their binarization."""
    probabilities: np.ndarray
    vector: np.ndarray
    empty_input: bool = False


def classify_batch(params: RerankerParams, candidates: Sequence[Sequence[str]],
                   threshold: float = 0.5) -> List[Classification]:
    if not candidates:
        return []
    probs = _class_probabilities(params, candidates).value
    results = []
    for cand, row in zip(candidates, probs):
        if not cand:
            logger.warning("Empty reranker candidate; classified from the bias alone")
        results.append(Classification(row, (row >= threshold).astype(np.int8), not cand))
    return results


def classify(params: RerankerParams, candidate: Sequence[str], threshold: float = 0.5) -> Classification:
    """Probabilities o and the content vector (bit set where o >= threshold)."""
    return classify_batch(params, [candidate], threshold)[0]


@dataclass
class Candidate:
    """An n-best entry as the reranker sees it."""
    tokens: List[str]
    log_prob: float


@dataclass
class RerankEntry:
    """A rescored candidate with its diagnostics."""
    original_rank: int
    tokens: List[str]
    log_prob: float
    penalty: float
    score: float
    predicted: List[int] = field(default_factory=list)
    empty_input: bool = False


def rerank(nbest: Sequence[Candidate], da: DialogueAct, params: RerankerParams,
           config: RerankConfig) -> List[RerankEntry]:
    """Rescore candidates by log_prob - weight x penalty; stable on the original rank."""
    if not nbest:
        raise ValueError("Cannot rerank an empty n-best list")
    gold, _ = da_to_content_vector(da, params.inventory)
    inputs = [reranker_input(c.tokens, params.mode) for c in nbest]
    results = classify_batch(params, inputs, config.binarization_threshold)
    entries = []
    for rank, (cand, result) in enumerate(zip(nbest, results)):
        if config.penalty_mode == PenaltyMode.EXPECTED:
            penalty = expected_penalty(result.probabilities, gold)
        else:
            penalty = float(hamming_penalty(result.vector, gold))
        entries.append(RerankEntry(
            original_rank=rank,
            tokens=list(cand.tokens),
            log_prob=cand.log_prob,
            penalty=penalty,
            score=cand.log_prob - config.penalty_weight * penalty,
            predicted=result.vector.tolist(),
            empty_input=result.empty_input,
        ))
    entries.sort(key=lambda e: (-e.score, e.original_rank))
    return entries


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class RerankerItem:
    """A gold candidate sequence with the DA it expresses."""
    da_id: str
    tokens: List[str]
    da: DialogueAct


@dataclass
class RerankerPass:
    pass_no: int
    loss: float
    train_distance: int
    validation_distance: int
    selection_score: float


@dataclass
class RerankerReport:
    """Per-pass distances and the selected pass."""
    best_pass: int = 0
    best_selection_score: float = float("inf")
    passes: List[RerankerPass] = field(default_factory=list)

    def to_dict(self) -> Dict:
        best = next((p for p in self.passes if p.pass_no == self.best_pass), None)
        return {
            "best_pass": self.best_pass,
            "best_selection_score": self.best_selection_score,
            "passes_run": len(self.passes),
            "best": asdict(best) if best else None,
        }


def total_distance(params: RerankerParams, items: Sequence[RerankerItem], targets: np.ndarray,
                   threshold: float) -> int:
    if not items:
        return 0
    probs = _class_probabilities(params, [i.tokens for i in items]).value
    return int(np.sum((probs >= threshold).astype(np.int8) != targets))


def selection_score(train_distance: int, validation_distance: int, validation_weight: float = 10.0) -> float:
    """Model selection criterion: weighted validation distance plus training distance."""
    return validation_weight * validation_distance + train_distance


def train_reranker(items: Sequence[RerankerItem], validation: Sequence[RerankerItem], train_config: TrainConfig,
                   config: RerankConfig, mode: str,
                   trace: Optional[TrainingTraceLogger] = None) -> Tuple[RerankerParams, RerankerReport]:
    """Single Adam run on binary cross-entropy; keeps the pass with the lowest selection score.

    Raises:
        TrainingError: on an empty corpus or a diverging loss before any pass completes
    """
    if not items:
        raise TrainingError("Reranker training corpus is empty")
    inventory = ClassInventory.from_das(i.da for i in items)
    vocab = build_vocabulary(i.tokens for i in items)
    train_targets = np.stack([da_to_content_vector(i.da, inventory)[0] for i in items])
    val_targets = (np.stack([da_to_content_vector(i.da, inventory)[0] for i in validation])
                   if validation else np.zeros((0, len(inventory)), dtype=np.int8))
    if not validation:
        logger.warning("No reranker validation set; selecting on training distance only")

    rng = np.random.default_rng(train_config.seed)
    params = RerankerParams.initialize(mode, vocab, inventory, train_config, rng)
    tensors = params.named_tensors()
    adam = AdamState(learning_rate=train_config.learning_rate)
    report = RerankerReport()
    snapshot: Optional[Dict[str, np.ndarray]] = None
    threshold = config.binarization_threshold
    if trace:
        trace.start_restart(0, train_config.seed)
    logger.info(f"Training {mode} reranker on {len(items)} items, {len(inventory)} classes")

    for pass_no in range(1, config.max_passes + 1):
        order = rng.permutation(len(items))
        total_loss = 0.0
        rejected = 0
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            with GradientTape() as tape:
                tape.watch(*tensors.values())
                probs = _class_probabilities(params, [items[i].tokens for i in idx])
                loss = binary_cross_entropy(probs, train_targets[idx])
            value = float(loss.value)
            if not np.isfinite(value):
                if trace:
                    trace.complete_restart(0, RestartStatus.ABORTED, stop_reason="diverged")
                if snapshot is None:
                    raise TrainingError("Reranker loss diverged", actual=pass_no)
                logger.error(f"Reranker loss diverged in pass {pass_no}; keeping pass {report.best_pass}")
                return RerankerParams.from_arrays(mode, vocab, inventory, snapshot), report
            grads = backward(tape, loss).for_params(tensors)
            if not adam_update(tensors, grads, adam):
                rejected += 1
            total_loss += value

        train_dist = total_distance(params, items, train_targets, threshold)
        val_dist = total_distance(params, validation, val_targets, threshold)
        score = selection_score(train_dist, val_dist, config.validation_weight)
        report.passes.append(RerankerPass(pass_no, total_loss, train_dist, val_dist, score))
        if trace:
            trace.record_pass(0, pass_no, total_loss, score, rejected)
        if score < report.best_selection_score:
            report.best_selection_score = score
            report.best_pass = pass_no
            snapshot = params.snapshot()

    logger.info(f"Reranker selected pass {report.best_pass} with selection score {report.best_selection_score}")
    if trace:
        trace.complete_restart(0, RestartStatus.SUCCESS, report.best_pass, report.best_selection_score, "max_passes")
    return RerankerParams.from_arrays(mode, vocab, inventory, snapshot), report
