"""
Experiment runner.

Trains (or loads) per-fold generator and reranker models, decodes every test
DA under each setup (greedy, beam-<b>, rerank-<b>), turns decoder output into
text (detokenized strings, or parsed and realized trees), and scores the
pooled outputs of all folds.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from core.corpus import CorpusInstance, candidate_sequences, target_sequences, training_pairs
from core.data_model import detokenize, encode_da, parse_bracketed, relexicalize, tokenize_sentence
from core.errors import LeakageError, NLGError, TrainingError, TreeParseError
from core.evaluation import EvalReport, SlotPatternLexicon, evaluate_outputs
from core.log_utils import get_logger
from core.model_store import load_generator, load_reranker, save_generator, save_reranker
from core.reranker import Candidate, RerankerItem, RerankerParams, rerank, train_reranker
from core.seq2seq import GeneratorParams, ValidationItem, beam_search, greedy_decode, hypothesis_tokens, train
from core.surface_realizer import RealizationRules, realize
from core.training_trace_logger import TrainingTraceLogger

from .config_loader import ExperimentConfig
from .folds import Fold, FoldPlan, fold_seed

logger = get_logger("nlg.experiment")

GREEDY = "greedy"
BEAM = "beam"
RERANK = "rerank"


def setup_names(beam_sizes: Sequence[int]) -> List[str]:
    """greedy, then beam-<b> and rerank-<b> for every beam size above 1."""
    names = [GREEDY]
    for b in sorted(set(beam_sizes)):
        if b > 1:
            names.extend([f"{BEAM}-{b}", f"{RERANK}-{b}"])
    return names


def parse_setup(name: str) -> Tuple[str, int]:
    """Split a setup name into (kind, beam size)."""
    if name == GREEDY:
        return GREEDY, 1
    kind, _, size = name.partition("-")
    if kind not in (BEAM, RERANK) or not size.isdigit() or int(size) < 1:
        raise ValueError(f"Unknown setup: {name}")
    return kind, int(size)


@dataclass
class ExperimentContext:
    """Everything a fold job needs besides the corpus."""
    config: ExperimentConfig
    rules: RealizationRules
    run_dir: Path
    lexicon: Optional[SlotPatternLexicon] = None
    config_path: Optional[str] = None

    @property
    def mode(self) -> str:
        return self.config.mode.value

    @property
    def plural_lexicon(self) -> frozenset:
        return frozenset(self.rules.plural_lexicon)

    def model_dir(self, fold: Optional[int]) -> Path:
        return self.run_dir / "models" / ("full" if fold is None else f"fold-{fold:02d}")

    def train_command(self, fold: Optional[int], reranker: bool = False) -> str:
        parts = ["nlg-experiment"]
        if self.config_path:
            parts += ["--config", self.config_path]
        parts += ["--mode", self.mode, "train-reranker" if reranker else "train"]
        if fold is not None:
            parts += ["--fold", str(fold)]
        return " ".join(parts)


@dataclass
class FoldModels:
    """Models of one fold and the DA ids they were trained on."""
    generator: GeneratorParams
    reranker: Optional[RerankerParams]
    training_da_ids: List[str]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def validation_items(instances: Sequence[CorpusInstance], mode: str, plural_lexicon: frozenset,
                     sort_triples: bool) -> List[ValidationItem]:
    return [ValidationItem(encode_da(i.da, sort_triples), target_sequences(i, mode, plural_lexicon))
            for i in instances]


def reranker_items(instances: Sequence[CorpusInstance], mode: str, plural_lexicon: frozenset) -> List[RerankerItem]:
    return [RerankerItem(i.da_id, tokens, i.da)
            for i in instances for tokens in candidate_sequences(i, mode, plural_lexicon)]


def train_generator_model(ctx: ExperimentContext, fit: Sequence[CorpusInstance],
                          validation: Sequence[CorpusInstance], fold: Optional[int]) -> Path:
    """Train a generator on the fit instances and save it with their DA ids."""
    seed = ctx.config.train.seed if fold is None else fold_seed(ctx.config.seed, fold)
    train_config = ctx.config.train.model_copy(update={"seed": seed})
    sort_triples = train_config.canonical_da_order
    pairs = training_pairs(fit, ctx.mode, ctx.plural_lexicon, sort_triples)
    val = validation_items(validation, ctx.mode, ctx.plural_lexicon, sort_triples)
    label = "full" if fold is None else f"fold-{fold:02d}"
    trace = TrainingTraceLogger(ctx.run_dir / "traces")
    trace.start_run(f"{label}-generator", "generator", ctx.mode, train_config.model_dump(mode="json"))
    try:
        params, report = train(pairs, val, train_config, ctx.mode, trace)
    except NLGError:
        trace.complete_run(None, status="failed")
        raise
    trace.complete_run(report.selected_restart)
    return save_generator(ctx.model_dir(fold) / "generator.npz", params, train_config,
                          [i.da_id for i in fit], report.to_dict())


def train_reranker_model(ctx: ExperimentContext, fit: Sequence[CorpusInstance],
                         validation: Sequence[CorpusInstance], fold: Optional[int]) -> Path:
    """Train a reranker on the gold candidates of the fit instances."""
    seed = ctx.config.train.seed if fold is None else fold_seed(ctx.config.seed, fold)
    train_config = ctx.config.train.model_copy(update={"seed": seed})
    label = "full" if fold is None else f"fold-{fold:02d}"
    trace = TrainingTraceLogger(ctx.run_dir / "traces")
    trace.start_run(f"{label}-reranker", "reranker", ctx.mode, ctx.config.rerank.model_dump(mode="json"))
    try:
        params, report = train_reranker(reranker_items(fit, ctx.mode, ctx.plural_lexicon),
                                        reranker_items(validation, ctx.mode, ctx.plural_lexicon),
                                        train_config, ctx.config.rerank, ctx.mode, trace)
    except NLGError:
        trace.complete_run(None, status="failed")
        raise
    trace.complete_run(0)
    return save_reranker(ctx.model_dir(fold) / "reranker.npz", params, train_config,
                         [i.da_id for i in fit], report.to_dict())


def fold_instances(corpus: Sequence[CorpusInstance], indices: Sequence[int]) -> List[CorpusInstance]:
    return [corpus[i] for i in indices]


def prepare_fold_models(ctx: ExperimentContext, corpus: Sequence[CorpusInstance], fold: Fold,
                        need_reranker: bool, train_missing: bool) -> FoldModels:
    """Load a fold's models, training the missing ones when allowed.

    Raises:
        MissingModelError: when a model is absent and training is not allowed
    """
    fit = fold_instances(corpus, fold.fit)
    validation = fold_instances(corpus, fold.validation)
    gen_path = ctx.model_dir(fold.index) / "generator.npz"
    rer_path = ctx.model_dir(fold.index) / "reranker.npz"
    if train_missing and not gen_path.exists():
        train_generator_model(ctx, fit, validation, fold.index)
    generator, header = load_generator(gen_path, ctx.train_command(fold.index))
    reranker = None
    if need_reranker:
        if train_missing and not rer_path.exists():
            train_reranker_model(ctx, fit, validation, fold.index)
        reranker, rer_header = load_reranker(rer_path, ctx.train_command(fold.index, reranker=True))
        check_leakage(rer_header["training_da_ids"], [corpus[i].da_id for i in fold.test], fold.index)
    return FoldModels(generator, reranker, header["training_da_ids"])


def check_leakage(training_da_ids: Sequence[str], test_da_ids: Sequence[str], fold: Optional[int] = None) -> None:
    """Raise LeakageError if any test DA was used for training."""
    leaked = sorted(set(training_da_ids) & set(test_da_ids))
    if leaked:
        raise LeakageError("Test DAs were seen in training", field=None if fold is None else f"fold {fold}",
                           actual=leaked[:10])


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

@dataclass
class InstanceOutput:
    """One decoded test instance under one setup."""
    da_id: str
    fold: Optional[int]
    tokens: List[str]
    text: str
    relexicalized: str
    unresolved: int
    log_prob: float
    truncated: bool = False
    tree_repairs: int = 0
    nbest: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["log_prob"] = round(self.log_prob, 4)
        return data


def output_text(tokens: Sequence[str], mode: str, rules: RealizationRules) -> Tuple[str, int]:
    """Text for decoder output plus the number of tree repairs needed."""
    if mode == "string":
        return detokenize(tokens), 0
    try:
        parsed = parse_bracketed(tokens)
    except TreeParseError as e:
        logger.warning(f"Decoder output is not a tree, realizing as empty: {e}")
        return "", 1
    return realize(parsed.tree, rules), parsed.recoveries


def decode_instance(ctx: ExperimentContext, models: FoldModels, instance: CorpusInstance, setup: str,
                    fold: Optional[int] = None) -> InstanceOutput:
    kind, beam = parse_setup(setup)
    max_len = ctx.config.train.decode_length(ctx.mode)
    params = models.generator
    nbest: List[Dict] = []
    if kind == GREEDY:
        result = greedy_decode(params, instance.da, max_len)
        tokens, log_prob, truncated = result.tokens, result.log_prob, result.truncated
    else:
        hypotheses = beam_search(params, instance.da, beam, max_len)
        best = hypotheses[0]
        tokens, log_prob, truncated = hypothesis_tokens(params, best), best.log_prob, best.truncated
        if kind == RERANK:
            if models.reranker is None:
                raise ValueError(f"Setup {setup} needs a reranker")
            candidates = [Candidate(hypothesis_tokens(params, h), h.log_prob) for h in hypotheses]
            entries = rerank(candidates, instance.da, models.reranker, ctx.config.rerank)
            top = entries[0]
            tokens, log_prob = top.tokens, top.log_prob
            truncated = hypotheses[top.original_rank].truncated
            nbest = [{"rank": e.original_rank, "log_prob": round(e.log_prob, 4), "penalty": e.penalty,
                      "score": round(e.score, 4), "output": " ".join(e.tokens)} for e in entries]
    text, repairs = output_text(tokens, ctx.mode, ctx.rules)
    relexicalized, unresolved = relexicalize(text, instance.da, instance.lex)
    return InstanceOutput(instance.da_id, fold, list(tokens), text, relexicalized, unresolved, float(log_prob),
                          truncated, repairs, nbest)


# ---------------------------------------------------------------------------
# Setups
# ---------------------------------------------------------------------------

@dataclass
class SetupResult:
    """Scores of one setup, pooled and per fold; failed setups keep their error."""
    setup: str
    status: str = "ok"
    error: Optional[str] = None
    report: Optional[EvalReport] = None
    per_fold: Dict[int, EvalReport] = field(default_factory=dict)
    outputs: List[InstanceOutput] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.status != "ok"


def score_outputs(ctx: ExperimentContext, instances: Sequence[CorpusInstance],
                  outputs: Sequence[InstanceOutput]) -> EvalReport:
    if ctx.lexicon is None:
        raise ValueError("Scoring needs a slot pattern lexicon")
    lexicon = ctx.plural_lexicon
    hyps = [tokenize_sentence(o.text, lexicon) for o in outputs]
    refs = [[tokenize_sentence(r, lexicon) for r in i.refs] for i in instances]
    report = evaluate_outputs(hyps, refs, [o.text for o in outputs], [i.da for i in instances],
                              ctx.lexicon, lexicon)
    for entry, output in zip(report.instances, outputs):
        entry.update(output.to_dict())
    return report


def run_setup(ctx: ExperimentContext, corpus: Sequence[CorpusInstance], plan: FoldPlan, setup: str,
              models: Dict[int, FoldModels]) -> SetupResult:
    """Decode every test DA of every fold under one setup and score the pooled outputs."""
    result = SetupResult(setup)
    try:
        pooled_instances: List[CorpusInstance] = []
        for fold in plan.folds:
            if fold.index not in models:
                raise NLGError("No models for fold", field=f"fold {fold.index}")
            fold_models = models[fold.index]
            test = fold_instances(corpus, fold.test)
            check_leakage(fold_models.training_da_ids, [i.da_id for i in test], fold.index)
            outputs = [decode_instance(ctx, fold_models, i, setup, fold.index) for i in test]
            result.per_fold[fold.index] = score_outputs(ctx, test, outputs)
            result.outputs.extend(outputs)
            pooled_instances.extend(test)
        result.report = score_outputs(ctx, pooled_instances, result.outputs)
    except LeakageError:
        raise
    except (NLGError, ValueError) as e:
        logger.error(f"Setup {setup} failed: {e}")
        result.status = "failed"
        result.error = str(e)
    return result


@dataclass
class CVResult:
    """Fold plan, per-fold model failures and all setup results of one run."""
    plan: FoldPlan
    setups: List[SetupResult]
    fold_errors: Dict[int, str] = field(default_factory=dict)


def run_cv(ctx: ExperimentContext, corpus: Sequence[CorpusInstance], plan: FoldPlan,
           setups: Optional[Sequence[str]] = None, train_missing: bool = True) -> CVResult:
    """Prepare models for every fold (in parallel up to the worker count) and run all setups."""
    setups = list(setups or setup_names(ctx.config.beam_sizes))
    need_reranker = any(parse_setup(s)[0] == RERANK for s in setups)

    def prepare(fold: Fold):
        try:
            return fold.index, prepare_fold_models(ctx, corpus, fold, need_reranker, train_missing), None
        except TrainingError as e:
            logger.error(f"Fold {fold.index} has no usable models: {e}")
            return fold.index, None, e

    if ctx.config.workers > 1:
        with ThreadPoolExecutor(max_workers=ctx.config.workers) as pool:
            prepared = list(pool.map(prepare, plan.folds))
    else:
        prepared = [prepare(fold) for fold in plan.folds]

    models = {k: m for k, m, _ in prepared if m is not None}
    fold_errors = {k: str(e) for k, _, e in prepared if e is not None}
    results = [run_setup(ctx, corpus, plan, s, models) for s in setups]
    return CVResult(plan, results, fold_errors)
