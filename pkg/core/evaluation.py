"""
Evaluation

Corpus BLEU and NIST over tokenized outputs with multiple references, an
automatic slot-error counter driven by a surface-pattern lexicon, and paired
bootstrap resampling. Both metrics are computed from additive per-sentence
sufficient statistics, so the bootstrap resamples statistics rather than text.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .data_model import DeepSyntaxTree, DialogueAct, tokenize_sentence, tree_to_flat
from .errors import EvaluationError, LexiconError
from .log_utils import get_logger

logger = get_logger("nlg.evaluation")

BLEU_ORDER = 4
NIST_ORDER = 5
NIST_BETA = math.log(0.5) / math.log(1.5) ** 2

Tokens = Sequence[str]


def extract_ngrams(tokens: Tokens, max_order: int) -> Counter:
    ngrams: Counter = Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            ngrams[tuple(tokens[i:i + n])] += 1
    return ngrams


def _max_reference_counts(refs: Sequence[Tokens], max_order: int) -> Counter:
    merged: Counter = Counter()
    for ref in refs:
        for ngram, count in extract_ngrams(ref, max_order).items():
            if count > merged[ngram]:
                merged[ngram] = count
    return merged


def _check_inputs(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]]):
    if not hypotheses:
        raise EvaluationError("No hypotheses to score")
    if len(hypotheses) != len(references):
        raise EvaluationError("Hypotheses and reference sets are misaligned",
                              expected=len(hypotheses), actual=len(references))
    for i, refs in enumerate(references):
        if not refs:
            raise EvaluationError("Empty reference set", position=i)


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def bleu_sentence_stats(hypothesis: Tokens, refs: Sequence[Tokens]) -> np.ndarray:
    """[correct_1..4, total_1..4, hyp_len, closest_ref_len]."""
    hyp_counts = extract_ngrams(hypothesis, BLEU_ORDER)
    ref_counts = _max_reference_counts(refs, BLEU_ORDER)
    stats = np.zeros(2 * BLEU_ORDER + 2)
    for ngram, count in hyp_counts.items():
        stats[len(ngram) - 1] += min(count, ref_counts.get(ngram, 0))
    for n in range(1, BLEU_ORDER + 1):
        stats[BLEU_ORDER + n - 1] = max(len(hypothesis) - n + 1, 0)
    hyp_len = len(hypothesis)
    closest = min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]
    stats[-2] = hyp_len
    stats[-1] = closest
    return stats


def bleu_from_stats(stats: np.ndarray) -> np.ndarray:
    """BLEU in [0, 100] from summed statistics; works on stacked rows.

    Unsmoothed: any order without a matched n-gram, including an order the
    hypotheses are too short to have, gives 0.
    """
    stats = np.asarray(stats, dtype=np.float64)
    correct = stats[..., :BLEU_ORDER]
    total = stats[..., BLEU_ORDER:2 * BLEU_ORDER]
    sys_len = stats[..., -2]
    ref_len = stats[..., -1]
    zero = np.any(correct == 0, axis=-1) | (sys_len == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(np.where(zero[..., None], 1.0, correct) / np.where(zero[..., None], 1.0, total))
        geo = np.exp(np.mean(log_p, axis=-1))
        bp = np.where(sys_len < ref_len, np.exp(1.0 - ref_len / np.maximum(sys_len, 1e-300)), 1.0)
    return np.where(zero, 0.0, 100.0 * bp * geo)


def bleu(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> float:
    """Corpus BLEU with clipping against the most generous reference and closest-length brevity penalty."""
    _check_inputs(hypotheses, references)
    stats = sum(bleu_sentence_stats(h, r) for h, r in zip(hypotheses, references))
    return float(bleu_from_stats(stats))


# ---------------------------------------------------------------------------
# NIST
# ---------------------------------------------------------------------------

def nist_information_weights(references: Sequence[Sequence[Tokens]]) -> Dict[Tuple[str, ...], float]:
    """Information weight of every reference n-gram, counted over all references."""
    counts: Counter = Counter()
    total_words = 0
    for refs in references:
        for ref in refs:
            counts.update(extract_ngrams(ref, NIST_ORDER))
            total_words += len(ref)
    weights = {}
    for ngram, count in counts.items():
        context = total_words if len(ngram) == 1 else counts[ngram[:-1]]
        weights[ngram] = math.log2(context / count)
    return weights


def nist_sentence_stats(hypothesis: Tokens, refs: Sequence[Tokens],
                        weights: Dict[Tuple[str, ...], float]) -> np.ndarray:
    """[info_1..5, hyp_ngrams_1..5, hyp_len, mean_ref_len]."""
    hyp_counts = extract_ngrams(hypothesis, NIST_ORDER)
    ref_counts = _max_reference_counts(refs, NIST_ORDER)
    stats = np.zeros(2 * NIST_ORDER + 2)
    for ngram, count in hyp_counts.items():
        matched = min(count, ref_counts.get(ngram, 0))
        if matched:
            stats[len(ngram) - 1] += matched * weights.get(ngram, 0.0)
    for n in range(1, NIST_ORDER + 1):
        stats[NIST_ORDER + n - 1] = max(len(hypothesis) - n + 1, 0)
    stats[-2] = len(hypothesis)
    stats[-1] = sum(len(r) for r in refs) / len(refs)
    return stats


def nist_from_stats(stats: np.ndarray) -> np.ndarray:
    stats = np.asarray(stats, dtype=np.float64)
    info = stats[..., :NIST_ORDER]
    count = stats[..., NIST_ORDER:2 * NIST_ORDER]
    sys_len = stats[..., -2]
    ref_len = stats[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        per_order = np.where(count > 0, info / np.where(count > 0, count, 1.0), 0.0)
        ratio = np.where(ref_len > 0, sys_len / np.where(ref_len > 0, ref_len, 1.0), 1.0)
        bp = np.where(ratio < 1.0, np.exp(NIST_BETA * np.log(np.maximum(ratio, 1e-300)) ** 2), 1.0)
    return np.where(sys_len > 0, np.sum(per_order, axis=-1) * bp, 0.0)


def nist(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> float:
    """Corpus NIST up to 5-grams with information weights from the references."""
    _check_inputs(hypotheses, references)
    weights = nist_information_weights(references)
    stats = sum(nist_sentence_stats(h, r, weights) for h, r in zip(hypotheses, references))
    return float(nist_from_stats(stats))


# ---------------------------------------------------------------------------
# Slot errors
# ---------------------------------------------------------------------------

class SlotErrors(NamedTuple):
    missing: int
    superfluous: int
    repeated: int


@dataclass
class SlotErrorDetail:
    """Slot error counts with the classes behind them."""
    missing: List[str] = field(default_factory=list)
    superfluous: List[str] = field(default_factory=list)
    repeated: Dict[str, int] = field(default_factory=dict)
    unscored: List[str] = field(default_factory=list)

    @property
    def counts(self) -> SlotErrors:
        return SlotErrors(len(self.missing), len(self.superfluous), sum(self.repeated.values()))


class SlotPatternLexicon:
    """Surface patterns realizing each slot=value class.

    When a class inventory is given, every class in it must have patterns.
    """

    def __init__(self, patterns: Dict[str, Iterable[Union[str, Sequence[str]]]],
                 inventory: Optional[Iterable[str]] = None):
        self.patterns: Dict[str, List[Tuple[str, ...]]] = {}
        for cls, pats in patterns.items():
            parsed = []
            for p in pats:
                tokens = tuple(p.split()) if isinstance(p, str) else tuple(p)
                if not tokens:
                    raise LexiconError("Empty pattern", field=cls)
                if any(t != t.lower() for t in tokens):
                    raise LexiconError("Patterns must be lowercase", field=cls, actual=" ".join(tokens))
                parsed.append(tokens)
            if not parsed:
                raise LexiconError("Class has no patterns", field=cls)
            self.patterns[cls] = parsed
        if inventory is not None:
            self.check_coverage(inventory)

    def __contains__(self, cls: str) -> bool:
        return cls in self.patterns

    def classes(self) -> List[str]:
        return sorted(self.patterns)

    def check_coverage(self, classes: Iterable[str]) -> None:
        missing = sorted(set(classes) - set(self.patterns))
        if missing:
            raise LexiconError("Slot pattern lexicon does not cover all classes", actual=missing,
                               suggestions=["Add patterns for these classes to the slot pattern file"])

    def count_matches(self, cls: str, tokens: Sequence[str]) -> int:
        """Number of disjoint pattern occurrences, chosen left to right, longest first."""
        spans = []
        for pattern in self.patterns[cls]:
            n = len(pattern)
            for i in range(len(tokens) - n + 1):
                if tuple(tokens[i:i + n]) == pattern:
                    spans.append((i, -n))
        count = 0
        end = 0
        for start, neg_len in sorted(spans):
            if start >= end:
                count += 1
                end = start - neg_len
        return count


def output_tokens(output: Union[str, Sequence[str], DeepSyntaxTree], plural_lexicon: Iterable[str] = ()) -> List[str]:
    """Tokens to match patterns on: sentence tokens or tree lemmas."""
    if isinstance(output, DeepSyntaxTree):
        return tree_to_flat(output)[::2]
    if isinstance(output, str):
        return tokenize_sentence(output, frozenset(plural_lexicon))
    return list(output)


def slot_error_detail(output: Union[str, Sequence[str], DeepSyntaxTree], da: DialogueAct,
                      lexicon: SlotPatternLexicon, plural_lexicon: Iterable[str] = ()) -> SlotErrorDetail:
    tokens = output_tokens(output, plural_lexicon)
    detail = SlotErrorDetail()
    expected = da.slot_value_classes()
    for cls in expected:
        if cls not in lexicon:
            detail.unscored.append(cls)
            continue
        n = lexicon.count_matches(cls, tokens)
        if n == 0:
            detail.missing.append(cls)
        elif n > 1:
            detail.repeated[cls] = n - 1
    expected_set = set(expected)
    for cls in lexicon.classes():
        if cls not in expected_set and lexicon.count_matches(cls, tokens) > 0:
            detail.superfluous.append(cls)
    if detail.unscored:
        logger.warning(f"No slot patterns for {detail.unscored}; not scored")
    return detail


def slot_errors(output: Union[str, Sequence[str], DeepSyntaxTree], da: DialogueAct,
                lexicon: SlotPatternLexicon, plural_lexicon: Iterable[str] = ()) -> SlotErrors:
    """(missing, superfluous, repeated) counts of an output against its DA."""
    return slot_error_detail(output, da, lexicon, plural_lexicon).counts


# ---------------------------------------------------------------------------
# Reports and significance
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Corpus scores and slot error totals of one system output set."""
    bleu: float
    nist: float
    missing: int = 0
    superfluous: int = 0
    repeated: int = 0
    instances: List[Dict] = field(default_factory=list)

    @property
    def slot_error_total(self) -> int:
        return self.missing + self.superfluous + self.repeated

    def to_dict(self, with_instances: bool = True) -> Dict:
        data = {
            "bleu": round(self.bleu, 4),
            "nist": round(self.nist, 4),
            "missing": self.missing,
            "superfluous": self.superfluous,
            "repeated": self.repeated,
        }
        if with_instances:
            data["instances"] = self.instances
        return data


def evaluate_outputs(hypotheses: Sequence[Tokens], references: Sequence[Sequence[Tokens]],
                     slot_outputs: Sequence[Union[str, DeepSyntaxTree]], das: Sequence[DialogueAct],
                     lexicon: SlotPatternLexicon, plural_lexicon: Iterable[str] = ()) -> EvalReport:
    """Score token outputs with BLEU and NIST and count slot errors per instance.

    Raises:
        LexiconError: if a slot=value class of the DAs has no patterns
    """
    lexicon.check_coverage({cls for da in das for cls in da.slot_value_classes()})
    report = EvalReport(bleu=bleu(hypotheses, references), nist=nist(hypotheses, references))
    for hyp, output, da in zip(hypotheses, slot_outputs, das):
        detail = slot_error_detail(output, da, lexicon, plural_lexicon)
        missing, superfluous, repeated = detail.counts
        report.missing += missing
        report.superfluous += superfluous
        report.repeated += repeated
        report.instances.append({
            "da": da.to_string(),
            "output": " ".join(hyp),
            "missing": detail.missing,
            "superfluous": detail.superfluous,
            "repeated": detail.repeated,
        })
    return report


@dataclass
class BootstrapResult:
    """Outcome counts of paired bootstrap resampling."""
    p_value: float
    iterations: int
    a_better: int
    b_better: int
    ties: int
    score_a: float
    score_b: float


_METRICS = ("bleu", "nist")


def _stats_matrix(outputs: Sequence[Tokens], references: Sequence[Sequence[Tokens]], metric: str,
                  weights: Optional[Dict] = None) -> np.ndarray:
    if metric == "bleu":
        return np.stack([bleu_sentence_stats(h, r) for h, r in zip(outputs, references)])
    return np.stack([nist_sentence_stats(h, r, weights) for h, r in zip(outputs, references)])


def paired_bootstrap(outputs_a: Sequence[Tokens], outputs_b: Sequence[Tokens],
                     references: Sequence[Sequence[Tokens]], metric: str = "bleu",
                     iterations: int = 1000, seed: int = 1) -> BootstrapResult:
    """Paired bootstrap test of whether system B beats system A.

    p is the share of resamples where B does not beat A, with ties counted
    as half.
    """
    if metric not in _METRICS:
        raise EvaluationError("Unknown metric", expected=_METRICS, actual=metric)
    if len(outputs_a) != len(outputs_b) or len(outputs_a) != len(references):
        raise EvaluationError("Bootstrap inputs are misaligned",
                              actual=(len(outputs_a), len(outputs_b), len(references)))
    _check_inputs(outputs_a, references)
    if iterations < 1:
        raise EvaluationError("Bootstrap needs at least one iteration", actual=iterations)
    if iterations < 1000:
        logger.warning(f"Bootstrap with only {iterations} iterations")

    weights = nist_information_weights(references) if metric == "nist" else None
    score_fn = bleu_from_stats if metric == "bleu" else nist_from_stats
    stats_a = _stats_matrix(outputs_a, references, metric, weights)
    stats_b = _stats_matrix(outputs_b, references, metric, weights)

    rng = np.random.default_rng(seed)
    n = len(outputs_a)
    a_better = b_better = ties = 0
    chunk = max(1, 200000 // n)
    for start in range(0, iterations, chunk):
        size = min(chunk, iterations - start)
        idx = rng.integers(0, n, size=(size, n))
        sa = score_fn(stats_a[idx].sum(axis=1))
        sb = score_fn(stats_b[idx].sum(axis=1))
        b_better += int(np.sum(sb > sa))
        a_better += int(np.sum(sa > sb))
        ties += int(np.sum(sa == sb))

    return BootstrapResult(
        p_value=(a_better + 0.5 * ties) / iterations,
        iterations=iterations,
        a_better=a_better,
        b_better=b_better,
        ties=ties,
        score_a=float(score_fn(stats_a.sum(axis=0))),
        score_b=float(score_fn(stats_b.sum(axis=0))),
    )
