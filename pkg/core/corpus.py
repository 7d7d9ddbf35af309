"""
Corpus IO

Reads and writes JSONL generation corpora and turns corpus instances into the
source/target token sequences each generation mode trains on.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

from .data_model import (
    DeepSyntaxTree,
    DialogueAct,
    encode_da,
    parse_bracketed,
    parse_da,
    tokenize_sentence,
    tree_to_bracketed,
    tree_to_flat,
)
from .errors import CorpusValidationError, DAParseError, TreeParseError
from .log_utils import get_logger
from .schema_validator import SchemaValidator, default_validator

logger = get_logger("nlg.data")

MODES = ("string", "tree")


@dataclass
class CorpusInstance:
    """One DA with its reference paraphrases."""
    da_id: str
    da: DialogueAct
    refs: List[str]
    trees: List[Optional[DeepSyntaxTree]] = field(default_factory=list)
    lex: Dict[str, str] = field(default_factory=dict)

    def has_trees(self) -> bool:
        return bool(self.trees) and all(t is not None for t in self.trees)

    def to_record(self) -> Dict:
        record = {"id": self.da_id, "da": self.da.to_string(), "refs": list(self.refs)}
        if self.has_trees():
            bracketed = [" ".join(tree_to_bracketed(t)) for t in self.trees]
            record["tree"] = bracketed[0] if len(set(bracketed)) == 1 else bracketed
        if self.lex:
            record["lex"] = dict(self.lex)
        return record


@dataclass
class TrainingPair:
    """A (source, target) sequence pair; each paraphrase is its own pair."""
    da_id: str
    source: List[str]
    target: List[str]


def _parse_tree_field(raw: Union[str, List[str]], n_refs: int, line: int) -> List[DeepSyntaxTree]:
    texts = [raw] * n_refs if isinstance(raw, str) else list(raw)
    if len(texts) != n_refs:
        raise CorpusValidationError("Tree list must align with refs", line=line, field="tree",
                                    expected=n_refs, actual=len(texts))
    trees = []
    for text in texts:
        try:
            parsed = parse_bracketed(text.split())
        except TreeParseError as e:
            raise CorpusValidationError(f"Invalid tree: {e}", line=line, field="tree") from e
        if parsed.recoveries:
            raise CorpusValidationError("Corpus tree is not well formed", line=line, field="tree",
                                        actual=parsed.notes)
        trees.append(parsed.tree)
    return trees


def parse_record(record: Dict, line: int = 0, validator: Optional[SchemaValidator] = None) -> CorpusInstance:
    validator = validator or default_validator()
    ok, errors = validator.validate_corpus_record(record)
    if not ok:
        raise CorpusValidationError("Corpus record failed schema validation", line=line,
                                    actual=errors)
    try:
        da = parse_da(record["da"])
    except DAParseError as e:
        raise CorpusValidationError(f"Invalid DA: {e}", line=line, field="da") from e
    refs = list(record["refs"])
    trees: List[Optional[DeepSyntaxTree]] = []
    if "tree" in record:
        trees = list(_parse_tree_field(record["tree"], len(refs), line))
    return CorpusInstance(
        da_id=record.get("id") or da.to_string(),
        da=da,
        refs=refs,
        trees=trees,
        lex=dict(record.get("lex", {})),
    )


def load_corpus(path: Union[str, Path], validator: Optional[SchemaValidator] = None) -> List[CorpusInstance]:
    """Load a JSONL corpus.

    Raises:
        FileNotFoundError: if the file does not exist
        CorpusValidationError: on malformed JSON, schema violations, bad DAs
            or trees, or duplicate DA ids; the error carries the line number
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Corpus file not found: {path}")
    instances: List[CorpusInstance] = []
    seen: Dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusValidationError(f"Invalid JSON: {e.msg}", line=line_no, position=e.pos) from e
            instance = parse_record(record, line_no, validator)
            if instance.da_id in seen:
                raise CorpusValidationError("Duplicate DA in corpus", line=line_no, field="id",
                                            actual=instance.da_id,
                                            suggestions=[f"First seen on line {seen[instance.da_id]}"])
            seen[instance.da_id] = line_no
            instances.append(instance)
    if not instances:
        raise CorpusValidationError("Corpus is empty", field=str(path))
    logger.info(f"Loaded {len(instances)} DAs with {sum(len(i.refs) for i in instances)} references from {path}")
    return instances


def write_corpus(path: Union[str, Path], instances: Iterable[CorpusInstance]) -> Path:
    """Write instances as UTF-8 JSONL with LF endings and sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for instance in instances:
            f.write(json.dumps(instance.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
    return path


def target_sequences(instance: CorpusInstance, mode: str, plural_lexicon: Iterable[str] = ()) -> List[List[str]]:
    """Decoder targets for every reference of an instance."""
    if mode == "string":
        lexicon = frozenset(plural_lexicon)
        return [tokenize_sentence(ref, lexicon) for ref in instance.refs]
    if mode == "tree":
        if not instance.has_trees():
            raise CorpusValidationError("Tree mode needs trees for every reference", field=instance.da_id)
        return [tree_to_bracketed(t) for t in instance.trees]
    raise ValueError(f"Unknown mode: {mode}")


def candidate_sequences(instance: CorpusInstance, mode: str, plural_lexicon: Iterable[str] = ()) -> List[List[str]]:
    """Reranker inputs for every reference: sentence tokens or flat trees."""
    if mode == "tree":
        if not instance.has_trees():
            raise CorpusValidationError("Tree mode needs trees for every reference", field=instance.da_id)
        return [tree_to_flat(t) for t in instance.trees]
    return target_sequences(instance, mode, plural_lexicon)


def training_pairs(instances: Sequence[CorpusInstance], mode: str, plural_lexicon: Iterable[str] = (),
                   sort_triples: bool = False) -> List[TrainingPair]:
    lexicon = frozenset(plural_lexicon)
    pairs = []
    for instance in instances:
        source = encode_da(instance.da, sort_triples)
        for target in target_sequences(instance, mode, lexicon):
            pairs.append(TrainingPair(instance.da_id, source, target))
    return pairs
