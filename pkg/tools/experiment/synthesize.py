"""
Synthetic corpus generator.

Builds a restaurant-domain corpus from a YAML grammar: slot value
inventories, sentence frames and per-slot tree fragments. Each DA gets two
paraphrases whose deep syntax trees come from the grammar and whose
reference strings are realized from those trees, so trees and references
agree by construction. Placeholder values receive a lexical map for
relexicalization.
"""

import math
from itertools import combinations, product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from core.corpus import CorpusInstance
from core.data_model import DATriple, DeepSyntaxTree, DialogueAct, parse_bracketed, tokenize_sentence
from core.errors import GrammarError, TreeParseError
from core.log_utils import get_logger
from core.surface_realizer import RealizationRules, realize

logger = get_logger("nlg.experiment")

MODS = "{mods}"
VALUE = "{value}"
VALUES = "{values}"


class SlotSpec(BaseModel):
    """One slot: its values and how it shows up in the tree."""
    name: str
    values: List[str]
    required: bool = False
    max_values: int = 1
    variants: List[str] = Field(default_factory=list)
    each: str = "( {value} n:attr )"
    lexicalizations: List[str] = Field(default_factory=list)

    @field_validator('values')
    @classmethod
    def validate_values(cls, v):
        if not v:
            raise ValueError('A slot needs at least one value')
        if any(not value or any(ch.isspace() for ch in value) for value in v):
            raise ValueError('Slot values must be non-empty and contain no whitespace')
        if len(set(v)) != len(v):
            raise ValueError('Slot values must be unique')
        return v

    @model_validator(mode='after')
    def validate_max_values(self):
        if not 1 <= self.max_values <= len(self.values):
            raise ValueError(f"max_values of slot '{self.name}' must be between 1 and {len(self.values)}")
        return self

    def options(self) -> List[Tuple[str, ...]]:
        """Every value combination this slot can take, absence first when optional."""
        opts: List[Tuple[str, ...]] = [] if self.required else [()]
        for k in range(1, self.max_values + 1):
            opts.extend(combinations(self.values, k))
        return opts

    def fragment(self, variant: int, values: Sequence[str]) -> str:
        template = self.variants[variant]
        lemmas = [v.lower() for v in values]
        if VALUES in template:
            return template.replace(VALUES, " ".join(self.each.replace(VALUE, lemma) for lemma in lemmas))
        return " ".join(template.replace(VALUE, lemma) for lemma in lemmas)


class SyntheticGrammar(BaseModel):
    """Complete corpus grammar."""
    version: int = 1
    act: str = "inform"
    frames: List[str]
    slots: List[SlotSpec]

    @field_validator('frames')
    @classmethod
    def validate_frames(cls, v):
        if not v:
            raise ValueError('At least one frame is required')
        for frame in v:
            if MODS not in frame:
                raise ValueError(f'Frame lacks the {MODS} hole: {frame}')
        return v

    @model_validator(mode='after')
    def validate_slots(self):
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            raise ValueError('Slot names must be unique')
        for slot in self.slots:
            in_frames = all(f"{{{slot.name}}}" in frame for frame in self.frames)
            if not slot.variants and not in_frames:
                raise ValueError(f"Slot '{slot.name}' has no variants and is not placed by every frame")
            if in_frames and not (slot.required and slot.max_values == 1):
                raise ValueError(f"Frame slot '{slot.name}' must be required and single-valued")
        return self

    def capacity(self) -> int:
        """Number of distinct DAs the grammar can produce."""
        return math.prod(len(s.options()) for s in self.slots)

    def decode(self, code: int) -> List[Tuple[SlotSpec, Tuple[str, ...]]]:
        """Mixed-radix decoding of a DA number into per-slot values."""
        assignment = []
        for slot in self.slots:
            opts = slot.options()
            code, r = divmod(code, len(opts))
            assignment.append((slot, opts[r]))
        return assignment


def load_grammar(grammar_path: Union[str, Path]) -> SyntheticGrammar:
    """
    Load and validate a synthetic corpus grammar from a YAML file.

    Raises:
        FileNotFoundError: If the grammar file doesn't exist
        ValueError: If grammar validation fails
    """
    import yaml

    grammar_path = Path(grammar_path)
    if not grammar_path.exists():
        raise FileNotFoundError(f"Grammar file not found: {grammar_path}")
    try:
        with open(grammar_path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
        return SyntheticGrammar(**data)
    except Exception as e:
        raise ValueError(f"Failed to load grammar: {str(e)}")


Assignment = List[Tuple[SlotSpec, Tuple[str, ...]]]


def build_tree(grammar: SyntheticGrammar, assignment: Assignment, frame: int,
               variants: Sequence[int]) -> DeepSyntaxTree:
    """Instantiate a frame with the chosen fragment variant of every present slot."""
    text = grammar.frames[frame]
    mods = []
    modded = [(slot, values) for slot, values in assignment if values and slot.variants]
    for (slot, values), variant in zip(modded, variants):
        mods.append(slot.fragment(variant, values))
    for slot, values in assignment:
        if not slot.variants:
            text = text.replace(f"{{{slot.name}}}", values[0].lower())
    text = text.replace(MODS, " ".join(mods))
    try:
        parsed = parse_bracketed(text.split())
    except TreeParseError as e:
        raise GrammarError(f"Grammar produced an unparsable tree: {e}", actual=text) from e
    if parsed.recoveries:
        raise GrammarError("Grammar produced a malformed tree", actual=text, suggestions=parsed.notes)
    return parsed.tree


def _choice_space(grammar: SyntheticGrammar, assignment: Assignment) -> List[Tuple[int, Tuple[int, ...]]]:
    counts = [len(slot.variants) for slot, values in assignment if values and slot.variants]
    return [(f, tuple(v)) for f in range(len(grammar.frames)) for v in product(*(range(c) for c in counts))]


def _paraphrases(grammar: SyntheticGrammar, assignment: Assignment, rules: RealizationRules,
                 rng: np.random.Generator, da_id: str) -> Tuple[List[str], List[DeepSyntaxTree]]:
    space = _choice_space(grammar, assignment)
    order = rng.permutation(len(space))
    first = space[order[0]]
    first_tree = build_tree(grammar, assignment, *first)
    first_text = realize(first_tree, rules)
    for idx in order[1:]:
        tree = build_tree(grammar, assignment, *space[idx])
        text = realize(tree, rules)
        if text != first_text:
            return [first_text, text], [first_tree, tree]
    raise GrammarError("Grammar cannot produce two distinct paraphrases", field=da_id,
                       actual=first_text, suggestions=["Add frames or fragment variants"])


def _lexical_map(assignment: Assignment, rng: np.random.Generator) -> Dict[str, str]:
    lex = {}
    used = set()
    for slot, values in assignment:
        for value in values:
            if not value.startswith("X-") or not slot.lexicalizations:
                continue
            for idx in rng.permutation(len(slot.lexicalizations)):
                surface = slot.lexicalizations[idx]
                if surface not in used:
                    lex[value] = surface
                    used.add(surface)
                    break
    return lex


def synthesize_corpus(grammar: SyntheticGrammar, n_das: int, seed: int,
                      rules: RealizationRules) -> List[CorpusInstance]:
    """
    Generate n_das distinct DAs with two distinct paraphrases each.

    Raises:
        GrammarError: If the grammar cannot produce n_das distinct DAs or
            two distinct paraphrases of some DA
    """
    capacity = grammar.capacity()
    if n_das <= 0 or n_das > capacity:
        raise GrammarError("Grammar inventory cannot supply the requested number of DAs",
                           expected=f"1..{capacity}", actual=n_das)
    rng = np.random.default_rng(seed)
    codes = rng.choice(capacity, size=n_das, replace=False)
    instances = []
    for number, code in enumerate(codes, start=1):
        da_id = f"da-{number:04d}"
        assignment = grammar.decode(int(code))
        da = DialogueAct(tuple(DATriple(grammar.act, slot.name, value)
                               for slot, values in assignment for value in values))
        refs, trees = _paraphrases(grammar, assignment, rules, rng, da_id)
        instances.append(CorpusInstance(da_id=da_id, da=da, refs=refs, trees=trees,
                                        lex=_lexical_map(assignment, rng)))
    logger.info(f"Synthesized {len(instances)} DAs from a grammar of capacity {capacity} (seed {seed})")
    return instances


def realization_mismatches(instances: Sequence[CorpusInstance], rules: RealizationRules,
                           plural_lexicon: Optional[Sequence[str]] = None) -> List[str]:
    """DA ids whose stored references differ from the realized trees, token-wise."""
    lexicon = frozenset(plural_lexicon if plural_lexicon is not None else rules.plural_lexicon)
    mismatched = []
    for instance in instances:
        if not instance.has_trees():
            continue
        for ref, tree in zip(instance.refs, instance.trees):
            if tokenize_sentence(realize(tree, rules), lexicon) != tokenize_sentence(ref, lexicon):
                mismatched.append(instance.da_id)
                break
    return mismatched
