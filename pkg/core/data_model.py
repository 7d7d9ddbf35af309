"""
Data Model

Dialogue acts, sentence tokenization, deep syntax trees and vocabularies,
together with the three sequence encodings used by the generator and the
reranker: namespaced DA triples, bracketed trees and flat lemma/formeme lists.
"""

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from .errors import DAParseError, DialogueActError, TreeParseError, VocabularyError
from .log_utils import get_logger

logger = get_logger("nlg.data")

SLOTLESS = "_"
ACT_PREFIX = "act:"
SLOT_PREFIX = "slot:"
VALUE_PREFIX = "val:"
PLURAL_TOKEN = "-s"
OPEN = "("
CLOSE = ")"
MISSING_FORMEME = "x"

_NAME_RE = re.compile(r"[A-Za-z_][\w\-.]*")
_TOKEN_RE = re.compile(r"[\w'-]+|[^\w\s]")
_PLACEHOLDER_RE = re.compile(r"(?<![\w-])X(?:-(\w+))?(?![\w-])")
_NEEDS_QUOTES = re.compile(r'[\s,()&="\\]')
ATTACHED_PUNCTUATION = frozenset(".,!?;:")


# ---------------------------------------------------------------------------
# Dialogue acts
# ---------------------------------------------------------------------------

def slot_value_class(slot: str, value: str) -> str:
    return f"{slot}={value}"


class DATriple(NamedTuple):
    act_type: str
    slot: str
    value: str


@dataclass(frozen=True)
class DialogueAct:
    """Ordered (act type, slot, value) triples.

    Slot-less acts such as hello() use the sentinel slot and value "_".
    """
    triples: Tuple[DATriple, ...]

    def __post_init__(self):
        object.__setattr__(self, "triples", tuple(DATriple(*t) for t in self.triples))
        if not self.triples:
            raise DialogueActError("Dialogue act has no triples")
        seen = set()
        for t in self.triples:
            if not t.act_type:
                raise DialogueActError("Empty act type", actual=t)
            if not t.slot:
                raise DialogueActError("Empty slot name", actual=t)
            if t.slot == SLOTLESS:
                continue
            if (t.slot, t.value) in seen:
                raise DialogueActError("Duplicate slot-value pair", field=t.slot, actual=t.value)
            seen.add((t.slot, t.value))

    def __len__(self):
        return len(self.triples)

    @property
    def act_types(self) -> List[str]:
        return list(dict.fromkeys(t.act_type for t in self.triples))

    def slot_values(self) -> List[Tuple[str, str]]:
        return [(t.slot, t.value) for t in self.triples if t.slot != SLOTLESS]

    def slot_value_classes(self) -> List[str]:
        """"slot=value" class names, deduplicated in triple order."""
        return list(dict.fromkeys(slot_value_class(s, v) for s, v in self.slot_values()))

    def placeholders(self) -> List[str]:
        """Lexical-map keys of delexicalized values, in triple order."""
        keys = []
        for t in self.triples:
            if t.value == "X":
                keys.append(f"X-{t.slot}")
            elif t.value.startswith("X-"):
                keys.append(t.value)
        return keys

    def sorted(self) -> "DialogueAct":
        return DialogueAct(tuple(sorted(self.triples)))

    def to_string(self) -> str:
        """Canonical text form; parse_da(da.to_string()) == da."""
        groups: List[Tuple[str, List[str]]] = []
        for t in self.triples:
            if not groups or groups[-1][0] != t.act_type:
                groups.append((t.act_type, []))
            if t.slot == SLOTLESS:
                groups[-1][1].append(SLOTLESS)
            elif t.value == SLOTLESS:
                groups[-1][1].append(t.slot)
            else:
                groups[-1][1].append(f"{t.slot}={_format_value(t.value)}")
        return "&".join(f"{act}({', '.join(items)})" for act, items in groups)

    def __str__(self):
        return self.to_string()


def _format_value(value: str) -> str:
    if value and not _NEEDS_QUOTES.search(value):
        return value
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


class _DAScanner:
    """Recursive-descent reader for act(slot=value, ...)&act(...) strings."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str, expected: Optional[str] = None) -> DAParseError:
        found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
        return DAParseError(message, position=self.pos, expected=expected, actual=found,
                            field=self.text)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> Optional[str]:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else None

    def expect(self, char: str):
        if self.peek() != char:
            raise self.error(f"Expected '{char}'", expected=char)
        self.pos += 1

    def name(self, what: str) -> str:
        self.skip_ws()
        match = _NAME_RE.match(self.text, self.pos)
        if not match:
            raise self.error(f"Empty or invalid {what} name", expected=what)
        self.pos = match.end()
        return match.group(0)

    def quoted(self) -> str:
        self.pos += 1
        chars = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\" and self.pos + 1 < len(self.text):
                chars.append(self.text[self.pos + 1])
                self.pos += 2
                continue
            if ch == '"':
                self.pos += 1
                return "".join(chars)
            chars.append(ch)
            self.pos += 1
        raise self.error("Unterminated quoted value", expected='"')

    def value(self) -> str:
        if self.peek() == '"':
            return self.quoted()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in ",()&=\"":
            self.pos += 1
        raw = self.text[start:self.pos].strip()
        if not raw:
            self.pos = start
            raise self.error("Missing value after '='", expected="value")
        return raw

    def parse(self) -> List[DATriple]:
        triples: List[DATriple] = []
        while True:
            act = self.name("act")
            self.expect("(")
            if self.peek() == ")":
                raise self.error("Act has no slots; use act(_) for a slot-less act", expected="slot or _")
            while True:
                if self.peek() == SLOTLESS and not _NAME_RE.match(self.text, self.pos + 1):
                    self.pos += 1
                    triples.append(DATriple(act, SLOTLESS, SLOTLESS))
                else:
                    slot = self.name("slot")
                    if self.peek() == "=":
                        self.pos += 1
                        triples.append(DATriple(act, slot, self.value()))
                    else:
                        triples.append(DATriple(act, slot, SLOTLESS))
                nxt = self.peek()
                if nxt == ",":
                    self.pos += 1
                    continue
                if nxt == ")":
                    self.pos += 1
                    break
                raise self.error("Malformed slot list", expected="',' or ')'")
            nxt = self.peek()
            if nxt is None:
                return triples
            if nxt != "&":
                raise self.error("Unexpected text after act", expected="'&' or end of input")
            self.pos += 1


def parse_da(text: str) -> DialogueAct:
    """Parse "inform(name=X-name, food=French)" style dialogue acts.

    Raises:
        DAParseError: on malformed input, with the character position
    """
    if not text or not text.strip():
        raise DAParseError("Empty dialogue act", position=0)
    triples = _DAScanner(text).parse()
    try:
        return DialogueAct(tuple(triples))
    except DialogueActError as e:
        raise DAParseError(str(e.args[0]), field=text, actual=e.actual) from e


def encode_da(da: DialogueAct, sort_triples: bool = False) -> List[str]:
    """Concatenated namespaced triples: act:<type>, slot:<slot>, val:<value>."""
    triples = sorted(da.triples) if sort_triples else da.triples
    tokens: List[str] = []
    for t in triples:
        tokens.extend((ACT_PREFIX + t.act_type, SLOT_PREFIX + t.slot, VALUE_PREFIX + t.value))
    return tokens


def decode_da_tokens(tokens: Sequence[str]) -> DialogueAct:
    """Inverse of encode_da."""
    if len(tokens) % 3:
        raise DialogueActError("Encoded DA length must be a multiple of 3", actual=len(tokens))
    triples = []
    for i in range(0, len(tokens), 3):
        parts = []
        for token, prefix in zip(tokens[i:i + 3], (ACT_PREFIX, SLOT_PREFIX, VALUE_PREFIX)):
            if not token.startswith(prefix):
                raise DialogueActError("Token in wrong triple position", position=i, expected=prefix, actual=token)
            parts.append(token[len(prefix):])
        triples.append(DATriple(*parts))
    return DialogueAct(tuple(triples))


# ---------------------------------------------------------------------------
# Sentences
# ---------------------------------------------------------------------------

def tokenize_sentence(text: str, plural_lexicon: Iterable[str] = frozenset()) -> List[str]:
    """Lowercase, split punctuation, and split "-s" off lexicon nouns."""
    lexicon = plural_lexicon if isinstance(plural_lexicon, (set, frozenset)) else frozenset(plural_lexicon)
    tokens: List[str] = []
    for tok in _TOKEN_RE.findall(text.lower()):
        if len(tok) > 1 and tok.endswith("s") and tok[:-1] in lexicon:
            tokens.extend((tok[:-1], PLURAL_TOKEN))
        else:
            tokens.append(tok)
    return tokens


def _restore_placeholder(token: str) -> str:
    if token == "x":
        return "X"
    if token.startswith("x-"):
        return "X-" + token[2:]
    return token


def detokenize(tokens: Sequence[str]) -> str:
    """Inverse of tokenize_sentence for presentation."""
    pieces: List[Tuple[str, bool]] = []
    for tok in tokens:
        if tok == PLURAL_TOKEN:
            if not pieces:
                logger.warning("Sentence starts with a plural marker; kept verbatim")
                pieces.append((tok, False))
            else:
                pieces.append(("s", True))
        elif tok in ATTACHED_PUNCTUATION and pieces:
            pieces.append((tok, True))
        else:
            pieces.append((_restore_placeholder(tok), False))
    text = "".join(p if glue or i == 0 else " " + p for i, (p, glue) in enumerate(pieces))
    return text[:1].upper() + text[1:]


def relexicalize(text: str, da: DialogueAct, lexical_map: Dict[str, str]) -> Tuple[str, int]:
    """Fill placeholders from the instance's lexical map.

    Explicit placeholders ("X-name") are looked up directly; bare "X" symbols
    take the DA's placeholders in triple order.

    Returns:
        (text, number of placeholders left unresolved)
    """
    order = da.placeholders()
    unresolved = 0
    bare_index = 0

    def substitute(match: re.Match) -> str:
        nonlocal unresolved, bare_index
        if match.group(1) is not None:
            key = match.group(0)
        elif bare_index < len(order):
            key = order[bare_index]
            bare_index += 1
        else:
            unresolved += 1
            return match.group(0)
        if key in lexical_map:
            return lexical_map[key]
        unresolved += 1
        return match.group(0)

    return _PLACEHOLDER_RE.sub(substitute, text), unresolved


# ---------------------------------------------------------------------------
# Deep syntax trees
# ---------------------------------------------------------------------------

def _check_label(label: str, what: str):
    if not label:
        raise TreeParseError(f"Empty {what}")
    if any(ch.isspace() for ch in label) or OPEN in label or CLOSE in label:
        raise TreeParseError(f"Invalid characters in {what}", actual=label)


@dataclass(frozen=True)
class DeepSyntaxNode:
    """A content word with its formeme and ordered dependents; lemmas are stored lowercase."""
    lemma: str
    formeme: str
    children: Tuple["DeepSyntaxNode", ...] = ()

    def __post_init__(self):
        _check_label(self.lemma, "lemma")
        _check_label(self.formeme, "formeme")
        object.__setattr__(self, "lemma", self.lemma.lower())
        object.__setattr__(self, "children", tuple(self.children))

    def iter_preorder(self) -> Iterator["DeepSyntaxNode"]:
        yield self
        for child in self.children:
            yield from child.iter_preorder()


@dataclass(frozen=True)
class DeepSyntaxTree:
    """Technical root holding the top-level nodes."""
    children: Tuple[DeepSyntaxNode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def iter_preorder(self) -> Iterator[DeepSyntaxNode]:
        for child in self.children:
            yield from child.iter_preorder()

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_preorder())

    def lemmas(self) -> List[str]:
        return [n.lemma for n in self.iter_preorder()]


def tree_to_bracketed(tree: DeepSyntaxTree) -> List[str]:
    """Pre-order "( lemma formeme children* )" tokens; the root emits none of its own."""
    tokens: List[str] = []

    def emit(node: DeepSyntaxNode):
        tokens.extend((OPEN, node.lemma, node.formeme))
        for child in node.children:
            emit(child)
        tokens.append(CLOSE)

    for child in tree.children:
        emit(child)
    return tokens


@dataclass
class TreeParse:
    """A recovered tree with the repairs applied to obtain it."""
    tree: DeepSyntaxTree
    recoveries: int = 0
    notes: List[str] = field(default_factory=list)


@dataclass
class _Frame:
    lemma: Optional[str]
    formeme: str
    children: List[DeepSyntaxNode] = field(default_factory=list)


def parse_bracketed(tokens: Sequence[str]) -> TreeParse:
    """Parse bracketed tokens, repairing decoder output where possible.

    Repairs: stray closers are dropped, unclosed nodes are closed at the end,
    a node without formeme gets formeme "x", and tokens outside any node
    header are dropped. Every repair is counted.

    Raises:
        TreeParseError: on empty input or when no node can be recovered
    """
    if not tokens:
        raise TreeParseError("Empty tree sequence")
    notes: List[str] = []
    top: List[DeepSyntaxNode] = []
    stack: List[_Frame] = []

    def is_label(i: int) -> bool:
        return i < len(tokens) and tokens[i] not in (OPEN, CLOSE)

    def attach(nodes: List[DeepSyntaxNode]):
        (stack[-1].children if stack else top).extend(nodes)

    def close():
        frame = stack.pop()
        if frame.lemma is None:
            attach(frame.children)
        else:
            attach([DeepSyntaxNode(frame.lemma, frame.formeme, tuple(frame.children))])

    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == OPEN:
            if is_label(i + 1):
                lemma = tokens[i + 1]
                if is_label(i + 2):
                    formeme = tokens[i + 2]
                    i += 3
                else:
                    formeme = MISSING_FORMEME
                    notes.append(f"missing formeme for '{lemma}' at {i + 1}")
                    i += 2
                stack.append(_Frame(lemma, formeme))
            else:
                notes.append(f"node without lemma at {i}")
                stack.append(_Frame(None, MISSING_FORMEME))
                i += 1
        elif tok == CLOSE:
            if stack:
                close()
            else:
                notes.append(f"stray ')' at {i}")
            i += 1
        else:
            notes.append(f"dropped token '{tok}' at {i}")
            i += 1

    while stack:
        notes.append("unclosed node closed at end")
        close()

    if not top:
        raise TreeParseError("No tree nodes could be recovered", diagnostics=notes,
                             actual=" ".join(tokens[:20]))
    if notes:
        logger.warning(f"Tree recovered with {len(notes)} repairs: {'; '.join(notes)}")
    return TreeParse(DeepSyntaxTree(tuple(top)), len(notes), notes)


def bracketed_to_tree(tokens: Sequence[str]) -> DeepSyntaxTree:
    return parse_bracketed(tokens).tree


def tree_to_flat(tree: DeepSyntaxTree) -> List[str]:
    """Pre-order lemma, formeme pairs without structure."""
    tokens: List[str] = []
    for node in tree.iter_preorder():
        tokens.extend((node.lemma, node.formeme))
    return tokens


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

PAD, GO, STOP, UNK = "<pad>", "<go>", "<stop>", "<unk>"
RESERVED = (PAD, GO, STOP, UNK)
PAD_ID, GO_ID, STOP_ID, UNK_ID = range(len(RESERVED))


class Vocabulary:
    """Token to id bijection with reserved ids 0-3 for PAD, GO, STOP, UNK."""

    def __init__(self, tokens: Sequence[str], frequencies: Optional[Dict[str, int]] = None):
        self._id_to_token: List[str] = list(RESERVED) + list(tokens)
        self._token_to_id: Dict[str, int] = {}
        for idx, tok in enumerate(self._id_to_token):
            if tok in self._token_to_id:
                raise VocabularyError("Duplicate vocabulary token", actual=tok, position=idx)
            self._token_to_id[tok] = idx
        self.frequencies: Dict[str, int] = dict(frequencies or {})

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._id_to_token == other._id_to_token

    @property
    def tokens(self) -> List[str]:
        return self._id_to_token[len(RESERVED):]

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def to_ids(self, tokens: Sequence[str]) -> List[int]:
        return [self._token_to_id.get(t, UNK_ID) for t in tokens]

    def unknown(self, tokens: Sequence[str]) -> List[str]:
        """Tokens that to_ids would replace by UNK."""
        return [t for t in tokens if t not in self._token_to_id]

    def to_tokens(self, ids: Iterable[int]) -> List[str]:
        out = []
        for i in ids:
            if not 0 <= int(i) < len(self._id_to_token):
                raise VocabularyError("Unknown token id", expected=f"[0, {len(self)})", actual=int(i))
            out.append(self._id_to_token[int(i)])
        return out

    def to_dict(self) -> Dict:
        return {"reserved": list(RESERVED), "tokens": self.tokens, "frequencies": self.frequencies}

    @classmethod
    def from_dict(cls, data: Dict) -> "Vocabulary":
        if list(data.get("reserved", [])) != list(RESERVED):
            raise VocabularyError("Reserved tokens differ from this version", expected=list(RESERVED),
                                  actual=data.get("reserved"))
        return cls(data["tokens"], data.get("frequencies"))


def build_vocabulary(sequences: Iterable[Sequence[str]]) -> Vocabulary:
    """All observed tokens, most frequent first, ties in token order."""
    counts: Counter = Counter()
    n_sequences = 0
    for seq in sequences:
        counts.update(seq)
        n_sequences += 1
    if n_sequences == 0:
        raise VocabularyError("Cannot build a vocabulary from an empty corpus")
    clashing = set(counts) & set(RESERVED)
    if clashing:
        raise VocabularyError("Corpus uses reserved tokens", actual=sorted(clashing))
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(ordered, dict(counts))
