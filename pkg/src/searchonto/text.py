"""Tokenization, normalization and stemming shared by every stage.

All lookups (ontology terms, brand lexicon, query tokens) go through
:func:`normalize` so they compare exactly after stemming.
"""
from __future__ import annotations

import re
from functools import lru_cache

from nltk.stem.porter import PorterStemmer

_STEMMER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)

# keep letters, digits, hyphens and decimal points; everything else splits
_SPLIT = re.compile(r"[^a-z0-9\-\.]+")
_POSSESSIVE = re.compile(r"(?<=\w)'s\b|(?<=s)'(?=\s|$)")


@lru_cache(maxsize=65536)
def stem_token(token: str) -> str:
    """Porter-stem a single lowercase token. Numbers pass through."""
    if not token or token[0].isdigit():
        return token
    return _STEMMER.stem(token)


def tokenize(text: str) -> list[str]:
    """Lowercase, drop possessives and punctuation, split on whitespace.

    Hyphens inside a token are kept ("q-tips"); dots survive only inside
    numbers ("2.5").
    """
    text = _POSSESSIVE.sub("", text.lower().strip())
    out = []
    for raw in _SPLIT.split(text):
        tok = raw.strip("-.")
        if "." in tok and not re.fullmatch(r"\d+(\.\d+)?[a-z]*", tok):
            out.extend(t for t in tok.split(".") if t)
        elif tok:
            out.append(tok)
    return out


def normalize(text: str) -> list[str]:
    return [stem_token(t) for t in tokenize(text)]


def normalize_phrase(text: str) -> str:
    """Lowercase, trim and collapse whitespace without stemming."""
    return " ".join(text.lower().split())


def phrase_key(text: str) -> tuple[str, ...]:
    return tuple(normalize(text))
