"""Deterministic keyword grammar turning an editing prompt into an EditCommand.

The grammar is intentionally small: a prompt starts with an operation keyword,
tokens before the relation keyword bind to the target object, tokens after it
bind to the reference object(s). ``change X to <color>`` recolors, ``replace X
with Y`` swaps in a generated asset. See docs/grammar.md for the full keyword
list.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from importlib import resources

from .errors import (
    AmbiguousRelationError,
    MissingAssetError,
    NoOperationError,
    NoTargetError,
    UnknownColorError,
)


class OperationKind(enum.Enum):
    REMOVE = "remove"
    ADD = "add"
    RECOLOR = "recolor"
    MOVE = "move"
    REPLACE = "replace"


class Relation(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    MIDDLE = "middle"
    ABOVE = "above"
    UNDER = "under"
    FRONT = "front"
    BELOW = "below"
    ON = "on"
    BACK = "back"
    FAR_AWAY = "far away"
    CLOSE = "close"
    NONE = "none"


# Prompt keyword -> operation ("change" recolors).
OPERATION_KEYWORDS = {
    "remove": OperationKind.REMOVE,
    "add": OperationKind.ADD,
    "change": OperationKind.RECOLOR,
    "move": OperationKind.MOVE,
    "replace": OperationKind.REPLACE,
}

# Single-token relation lexemes; "far away" is matched as a bigram first.
RELATION_KEYWORDS = {
    "left": Relation.LEFT,
    "right": Relation.RIGHT,
    "middle": Relation.MIDDLE,
    "above": Relation.ABOVE,
    "under": Relation.UNDER,
    "front": Relation.FRONT,
    "below": Relation.BELOW,
    "on": Relation.ON,
    "back": Relation.BACK,
    "close": Relation.CLOSE,
}

STOPWORDS = {
    "the", "a", "an", "of", "to", "in", "at", "from", "by", "into", "onto",
    "this", "that", "these", "those", "is", "are", "be", "it", "its", "please",
}

_PUNCT = ".,!?;:'\"()[]"


@dataclass
class ObjectDescriptor:
    """Open-vocabulary object reference extracted from the prompt."""

    class_name: str
    color_attr: str | None = None
    plural: bool = False

    @property
    def class_tokens(self) -> list[str]:
        return self.class_name.split()


@dataclass
class EditCommand:
    """Structured form of one editing prompt."""

    op: OperationKind
    target: ObjectDescriptor
    relation: Relation = Relation.NONE
    references: list[ObjectDescriptor] = field(default_factory=list)
    color: tuple[float, float, float] | None = None
    color_name: str | None = None
    asset_ref: str | None = None
    magnitude: float | None = None


class ColorTable:
    """Case-insensitive color-name table loaded from the shipped TSV."""

    def __init__(self, rows: dict[str, tuple[float, float, float]]):
        self._rows = rows
        self._max_words = max(len(name.split()) for name in rows)

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, name: str) -> bool:
        return name.lower() in self._rows

    def lookup(self, name: str) -> tuple[float, float, float]:
        try:
            return self._rows[name.lower().strip()]
        except KeyError:
            raise UnknownColorError(name) from None

    def match_leading(self, tokens: list[str]) -> tuple[str, int] | None:
        """Longest color name starting at tokens[0]; returns (name, n_tokens)."""
        for n in range(min(self._max_words, len(tokens)), 0, -1):
            name = " ".join(tokens[:n])
            if name in self._rows:
                return name, n
        return None

    def nearest_name(self, rgb) -> tuple[str, float]:
        """Closest table entry to an RGB triple by Euclidean distance."""
        best_name, best_d = "", float("inf")
        for name, val in self._rows.items():
            d = sum((a - b) ** 2 for a, b in zip(val, rgb)) ** 0.5
            if d < best_d or (d == best_d and name < best_name):
                best_name, best_d = name, d
        return best_name, best_d


@functools.cache
def color_table() -> ColorTable:
    rows: dict[str, tuple[float, float, float]] = {}
    text = resources.files("splatedit").joinpath("data/colors.tsv").read_text("ascii")
    for line in text.splitlines():
        if not line.strip():
            continue
        name, r, g, b = line.split("\t")
        rows[name] = (int(r) / 255.0, int(g) / 255.0, int(b) / 255.0)
    return ColorTable(rows)


def lookup_color(word: str) -> tuple[float, float, float]:
    """Resolve a color keyword to an RGB triple in [0, 1]^3."""
    return color_table().lookup(word)


def _tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def _find_relation(tokens: list[str]) -> tuple[Relation, int, int] | None:
    """Leftmost relation keyword; multi-word lexemes match first.

    Returns (relation, start, end) token span or None.
    """
    for i, tok in enumerate(tokens):
        if tok == "far" and i + 1 < len(tokens) and tokens[i + 1] == "away":
            return Relation.FAR_AWAY, i, i + 2
        if tok in RELATION_KEYWORDS:
            return RELATION_KEYWORDS[tok], i, i + 1
    return None


def _parse_descriptor(tokens: list[str]) -> ObjectDescriptor | None:
    words = [t for t in tokens if t not in STOPWORDS]
    if not words:
        return None
    color_attr = None
    lead = color_table().match_leading(words)
    if lead is not None and len(words) > lead[1]:
        color_attr, n = lead
        words = words[n:]
    plural = words[-1].endswith("s")
    return ObjectDescriptor(class_name=" ".join(words), color_attr=color_attr, plural=plural)


def _split_references(tokens: list[str]) -> list[ObjectDescriptor]:
    groups: list[list[str]] = [[]]
    for tok in tokens:
        if tok == "and" and groups[-1]:
            groups.append([])
        else:
            groups[-1].append(tok)
    refs = []
    for group in groups[:2]:
        desc = _parse_descriptor(group)
        if desc is not None:
            refs.append(desc)
    return refs


def parse_prompt(text: str) -> EditCommand:
    """Parse one editing prompt; total and deterministic.

    Raises NoOperationError / NoTargetError / UnknownColorError /
    MissingAssetError / AmbiguousRelationError on malformed prompts.
    """
    tokens = _tokenize(text)
    if not tokens or tokens[0] not in OPERATION_KEYWORDS:
        raise NoOperationError(
            f"prompt must begin with one of {sorted(OPERATION_KEYWORDS)}: {text!r}"
        )
    op = OPERATION_KEYWORDS[tokens[0]]
    rest = tokens[1:]

    asset_tokens: list[str] = []
    if op is OperationKind.REPLACE:
        if "with" in rest:
            cut = rest.index("with")
            asset_tokens = rest[cut + 1:]
            rest = rest[:cut]
        else:
            raise MissingAssetError(f"replace prompt needs 'with <object>': {text!r}")

    color = None
    color_name = None
    if op is OperationKind.RECOLOR:
        if "to" not in rest:
            raise UnknownColorError(rest[-1] if rest else "")
        cut = len(rest) - 1 - rest[::-1].index("to")
        color_words = [t for t in rest[cut + 1:] if t not in STOPWORDS]
        rest = rest[:cut]
        phrase = " ".join(color_words)
        if not phrase or phrase not in color_table():
            raise UnknownColorError(phrase or "")
        color_name = phrase
        color = lookup_color(phrase)

    relation = Relation.NONE
    target_tokens = rest
    reference_tokens: list[str] = []
    found = _find_relation(rest)
    if found is not None:
        relation, start, end = found
        target_tokens = rest[:start]
        reference_tokens = rest[end:]

    target = _parse_descriptor(target_tokens)
    if target is None:
        raise NoTargetError(f"no target object in {text!r}")
    references = _split_references(reference_tokens)

    if relation is Relation.MIDDLE:
        if not (any(r.plural for r in references) or len(references) >= 2):
            raise AmbiguousRelationError(
                "'middle' needs a plural reference or two references"
            )

    asset_ref = None
    if op is OperationKind.ADD:
        asset_ref = target.class_name
    elif op is OperationKind.REPLACE:
        asset = _parse_descriptor(asset_tokens)
        if asset is None:
            raise MissingAssetError(f"replace prompt names no replacement object: {text!r}")
        asset_ref = asset.class_name

    return EditCommand(
        op=op,
        target=target,
        relation=relation,
        references=references,
        color=color,
        color_name=color_name,
        asset_ref=asset_ref,
    )


def normalize_prompt(text: str) -> str:
    """Cache key: lowercase, stopword-stripped token sequence."""
    return " ".join(t for t in _tokenize(text) if t not in STOPWORDS)


def descriptor_matches(descriptor: ObjectDescriptor, class_name: str) -> bool:
    """True when every descriptor class token occurs among the instance class
    tokens, allowing a trailing plural 's' on either side."""
    ctoks = class_name.lower().split()
    return all(any(_tokens_equal(d, c) for c in ctoks) for d in descriptor.class_tokens)


def _tokens_equal(a: str, b: str) -> bool:
    if a == b:
        return True
    if a.endswith("s") and a[:-1] == b:
        return True
    if b.endswith("s") and b[:-1] == a:
        return True
    return False
