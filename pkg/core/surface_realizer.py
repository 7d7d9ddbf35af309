"""
Surface Realizer

Rule-based linearization of deep syntax trees for the two-step pipeline. The
formeme table, inflection exceptions and article policy come from a YAML
rules file, so the covered domain can grow without code changes.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from pydantic import BaseModel, Field, field_validator

from .data_model import DeepSyntaxNode, DeepSyntaxTree, ATTACHED_PUNCTUATION
from .log_utils import get_logger

logger = get_logger("nlg.realizer")

TERMINALS = frozenset(".!?")
VOWELS = frozenset("aeiou")


class Placement(str, Enum):
    """Position of a dependent relative to its head."""
    BEFORE = "before"
    AFTER = "after"


class Morph(str, Enum):
    """Inflection applied to the head lemma."""
    NONE = "none"
    FINITE = "finite"
    PLURAL = "plural"
    GERUND = "gerund"
    PARTICIPLE = "participle"


class Article(str, Enum):
    """Determiner inserted in front of a noun phrase."""
    NONE = "none"
    A = "a"
    THE = "the"


class FormemeRule(BaseModel):
    """How a node with one formeme is realized."""
    prefix: Optional[str] = None
    placement: Placement = Placement.AFTER
    morph: Morph = Morph.NONE
    article: Article = Article.NONE
    coordinate: bool = False


FALLBACK_RULE = FormemeRule()


class RealizationRules(BaseModel):
    """Complete realization rule table."""
    version: int = 1
    formemes: Dict[str, FormemeRule] = Field(default_factory=dict)
    verb_forms: Dict[str, str] = Field(default_factory=dict)
    gerunds: Dict[str, str] = Field(default_factory=dict)
    participles: Dict[str, str] = Field(default_factory=dict)
    plurals: Dict[str, str] = Field(default_factory=dict)
    plural_lexicon: List[str] = Field(default_factory=list)
    surface_forms: Dict[str, str] = Field(default_factory=dict)
    no_article: List[str] = Field(default_factory=list)
    terminal_punctuation: str = "."
    capitalize: bool = True

    @field_validator('version')
    @classmethod
    def validate_version(cls, v):
        if v != 1:
            raise ValueError(f'Unsupported rules version {v}; expected 1')
        return v

    @field_validator('terminal_punctuation')
    @classmethod
    def validate_terminal(cls, v):
        if v not in TERMINALS:
            raise ValueError('terminal_punctuation must be one of . ! ?')
        return v


def load_rules(rules_path: Union[str, Path]) -> RealizationRules:
    """
    Load and validate realization rules from a YAML file.

    Raises:
        FileNotFoundError: If the rules file doesn't exist
        ValueError: If rule validation fails
    """
    import yaml

    rules_path = Path(rules_path)
    if not rules_path.exists():
        raise FileNotFoundError(f"Realization rules file not found: {rules_path}")
    try:
        with open(rules_path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
        return RealizationRules(**data)
    except Exception as e:
        raise ValueError(f"Failed to load realization rules: {str(e)}")


@dataclass
class RealizationResult:
    """Realized text with the fallbacks and warnings that occurred."""
    text: str
    fallbacks: int = 0
    warnings: List[str] = field(default_factory=list)


def is_placeholder(lemma: str) -> bool:
    lower = lemma.lower()
    return lower == "x" or lower.startswith("x-")


class _Realizer:
    def __init__(self, rules: RealizationRules):
        self.rules = rules
        self.fallbacks = 0
        self.warnings: List[str] = []

    def rule(self, formeme: str) -> FormemeRule:
        rule = self.rules.formemes.get(formeme)
        if rule is None:
            self.fallbacks += 1
            self.warnings.append(f"no rule for formeme '{formeme}'")
            return FALLBACK_RULE
        return rule

    def inflect(self, lemma: str, morph: Morph) -> str:
        if is_placeholder(lemma):
            return "X"
        r = self.rules
        base = r.surface_forms.get(lemma, lemma)
        if morph == Morph.FINITE:
            return r.verb_forms.get(lemma, base + "s")
        if morph == Morph.PLURAL:
            return r.plurals.get(lemma, base + "s")
        if morph == Morph.GERUND:
            return r.gerunds.get(lemma, base + "ing")
        if morph == Morph.PARTICIPLE:
            return r.participles.get(lemma, base + "ed")
        return base

    def coordinate(self, phrases: List[List[str]]) -> List[str]:
        if len(phrases) == 1:
            return phrases[0]
        words: List[str] = []
        for i, phrase in enumerate(phrases):
            if i == len(phrases) - 1:
                words.append("and")
            elif i > 0:
                words.append(",")
            words.extend(phrase)
        return words

    def phrase(self, node: DeepSyntaxNode) -> List[str]:
        rule = self.rule(node.formeme)
        before: List[str] = []
        after: List[str] = []
        children = list(node.children)
        i = 0
        while i < len(children):
            child_rule = self.rules.formemes.get(children[i].formeme, FALLBACK_RULE)
            j = i + 1
            if child_rule.coordinate:
                while j < len(children) and children[j].formeme == children[i].formeme:
                    j += 1
            words = self.coordinate([self.phrase(ch) for ch in children[i:j]])
            (before if child_rule.placement == Placement.BEFORE else after).extend(words)
            i = j
        words = before + [self.inflect(node.lemma, rule.morph)] + after
        if (rule.article != Article.NONE and rule.morph != Morph.PLURAL
                and not is_placeholder(node.lemma) and node.lemma not in self.rules.no_article):
            words = [rule.article.value] + words
        if rule.prefix:
            words = rule.prefix.split() + words
        return words


def _join(words: Sequence[str]) -> str:
    text = ""
    for w in words:
        if text and w not in ATTACHED_PUNCTUATION:
            text += " "
        text += w
    return text


def realize_detailed(tree: DeepSyntaxTree, rules: RealizationRules) -> RealizationResult:
    """Realize a tree and report fallbacks for unknown formemes."""
    if not tree.children:
        logger.warning("Realizing an empty tree")
        return RealizationResult("", 0, ["empty tree"])
    realizer = _Realizer(rules)
    words: List[str] = []
    for node in tree.children:
        words.extend(realizer.phrase(node))
    for i in range(len(words) - 1):
        if words[i] == "a" and words[i + 1][:1].lower() in VOWELS:
            words[i] = "an"
    if words[-1] not in TERMINALS:
        words.append(rules.terminal_punctuation)
    text = _join(words)
    if rules.capitalize:
        text = text[:1].upper() + text[1:]
    if realizer.fallbacks:
        logger.warning(f"Realizer fell back to bare lemmas {realizer.fallbacks} times: {realizer.warnings}")
    return RealizationResult(text, realizer.fallbacks, realizer.warnings)


def realize(tree: DeepSyntaxTree, rules: RealizationRules) -> str:
    """Linearize a deep syntax tree into a sentence."""
    return realize_detailed(tree, rules).text
