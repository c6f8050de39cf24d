"""Attribute distance functions.

Every function returns 0 when either argument is the wildcard ``"*"``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from rapidfuzz.distance import Levenshtein

from .errors import ConfigError
from .graph import WILDCARD

KINDS = ("normalized-edit", "exact", "numeric-abs", "jaccard-token")

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def levenshtein(a: str, b: str) -> int:
    return Levenshtein.distance(a, b)


def normalized_edit(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer length.

    The ratio is 0/0 for two empty strings; it is taken as 1 there, since an
    emptied value is no evidence that two records agree.
    """
    if not a and not b:
        return 1.0
    return Levenshtein.normalized_distance(a, b)


def exact(a: str, b: str) -> float:
    return 0.0 if a == b else 1.0


def numeric_abs(a: str, b: str) -> float:
    try:
        return abs(float(a) - float(b))
    except (TypeError, ValueError):
        return math.inf


def tokens(value: str) -> list[str]:
    return _TOKEN.findall(str(value).casefold())


def jaccard_token(a: str, b: str) -> float:
    ta, tb = set(tokens(a)), set(tokens(b))
    if not ta and not tb:
        return 1.0  # 0/0, read as "no shared evidence" like normalized_edit
    return 1.0 - len(ta & tb) / len(ta | tb)


_IMPL = {
    "normalized-edit": normalized_edit,
    "exact": exact,
    "numeric-abs": numeric_abs,
    "jaccard-token": jaccard_token,
}


@dataclass(frozen=True)
class DistanceFunction:
    kind: str = "normalized-edit"

    def __post_init__(self):
        if self.kind not in _IMPL:
            raise ConfigError(f"unknown distance function {self.kind!r}; expected one of {KINDS}")

    def __call__(self, a, b) -> float:
        if a == WILDCARD or b == WILDCARD:
            return 0.0
        return _IMPL[self.kind](str(a), str(b))
