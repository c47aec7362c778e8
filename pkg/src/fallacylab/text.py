"""Tokenization, stopwords, and stable seeding shared by every module."""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from importlib import resources

_TOKEN_RE = re.compile(r"<SEP>|\w+(?:'\w+)*|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Split into word / punctuation tokens, keeping surface forms."""
    return _TOKEN_RE.findall(text)


def token_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of tokenize(text), for in-place substitution."""
    return [m.span() for m in _TOKEN_RE.finditer(text)]


def is_word(token: str) -> bool:
    return bool(token) and (token[0].isalnum() or token[0] == "_")


@lru_cache(maxsize=1)
def load_stopwords() -> frozenset[str]:
    raw = resources.files("fallacylab.data").joinpath("stopwords.txt").read_text("utf-8")
    words = {line.strip().lower() for line in raw.splitlines()}
    return frozenset(w for w in words if w and not w.startswith("#"))


def stable_hash(*parts: object, bits: int = 64) -> int:
    """Process-independent hash of the stringified parts."""
    digest = hashlib.md5("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest, "big") % (1 << bits)


def derive_seed(*parts: object) -> int:
    """Deterministic 32-bit seed derived from arbitrary parts."""
    return stable_hash(*parts, bits=32)


def data_path(name: str):
    """Path-like handle to a packaged data file."""
    return resources.files("fallacylab.data").joinpath(name)
