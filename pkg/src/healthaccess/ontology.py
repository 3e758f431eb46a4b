"""Keyword ontology for deciding whether a review concerns health resources.

Matching is token-based: text is lowercased and split on any run of
non-alphanumeric characters, so hyphens and apostrophes act as token
boundaries ("Pepto-Bismol" and "pepto bismol" both match "pepto-bismol").
Single-token keywords also match their simple "s"/"es" plurals; that rule is
applied to the last token of multi-word phrases ("test kits" matches
"test kit").
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import ContractError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# The six categories and their keyword lists of the built-in ontology.
_DEFAULT_CATEGORIES: dict[str, list[str]] = {
    "Essential health supplies": [
        "sanitizer", "soap", "toilet paper", "mask", "disinfectant",
        "gloves", "thermometer", "tissues", "wipes", "face shield",
        "hand wash", "respirators", "alcohol",
    ],
    "Over-the-counter medications": [
        "acetaminophen", "tylenol", "advil", "motrin", "ibuprofen",
        "dayquil", "nyquil", "mucinex", "robitussin", "sudafed",
        "pepto-bismol", "tums", "vick's vaporub",
    ],
    "Preventive healthcare items": [
        "vitamins", "zinc", "pedialyte", "gatorade",
    ],
    "Diagnostic tools": [
        "test kit", "home test", "self test",
    ],
    "COVID-19 specific items": [
        "N95", "hydroxychloroquine",
    ],
    "Household sanitization products": [
        "lysol spray", "disinfectant wipes",
    ],
}


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Hit:
    category: str
    keyword: str
    start: int  # token index, inclusive
    end: int    # token index, exclusive


class KeywordOntology:
    """Immutable category -> keyword-phrase mapping with a token matcher."""

    def __init__(self, categories: dict[str, Sequence[str]]):
        self.categories: dict[str, tuple[str, ...]] = {}
        for name, phrases in categories.items():
            seen = set()
            kept = []
            for phrase in phrases:
                if not phrase or not tokenize(phrase):
                    raise ContractError(f"empty keyword phrase in category {name!r}")
                if phrase in seen:
                    raise ContractError(
                        f"duplicate keyword {phrase!r} in category {name!r}")
                seen.add(phrase)
                kept.append(phrase)
            self.categories[name] = tuple(kept)
        # token-sequence index: first token -> [(category, keyword, tokens)]
        self._index: dict[str, list[tuple[str, str, tuple[str, ...]]]] = {}
        for name, phrases in self.categories.items():
            for phrase in phrases:
                toks = tuple(tokenize(phrase))
                self._index.setdefault(toks[0], []).append((name, phrase, toks))

    def __eq__(self, other):
        return isinstance(other, KeywordOntology) and self.categories == other.categories

    def iter_keywords(self) -> Iterator[tuple[str, str]]:
        for name, phrases in self.categories.items():
            for phrase in phrases:
                yield name, phrase

    def find_hits(self, tokens: Sequence[str]) -> list[Hit]:
        """All keyword occurrences in an already-tokenized text.

        A phrase matches a contiguous token run; the final token may also
        carry an "s" or "es" plural suffix. Every occurrence is returned
        (classification needs positions); use :func:`matches` for the
        deduplicated (category, keyword) view.
        """
        hits = []
        for i, tok in enumerate(tokens):
            keys = [(tok, True)]
            # a plural token may stand for a singular first token, but only
            # for single-token phrases (the plural rule targets phrase ends)
            if tok.endswith("es"):
                keys.append((tok[:-2], False))
            if tok.endswith("s"):
                keys.append((tok[:-1], False))
            for key, exact in keys:
                for category, keyword, ptoks in self._index.get(key, ()):
                    n = len(ptoks)
                    if n == 1:
                        hits.append(Hit(category, keyword, i, i + 1))
                        continue
                    if not exact or i + n > len(tokens):
                        continue
                    if all(tokens[i + k] == ptoks[k] for k in range(1, n - 1)):
                        last = tokens[i + n - 1]
                        want = ptoks[n - 1]
                        if last in (want, want + "s", want + "es"):
                            hits.append(Hit(category, keyword, i, i + n))
        return hits


def default_ontology() -> KeywordOntology:
    """The built-in six-category ontology, frozen for reproducibility."""
    return KeywordOntology(_DEFAULT_CATEGORIES)


def load_ontology(path) -> KeywordOntology:
    """Load a category -> phrase-list override from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ContractError("ontology file must be a JSON object")
    return KeywordOntology(data)


def matches(text: str, ontology: KeywordOntology) -> list[tuple[str, str]]:
    """Distinct (category, keyword) pairs occurring in ``text``."""
    seen = set()
    out = []
    for hit in ontology.find_hits(tokenize(text)):
        key = (hit.category, hit.keyword)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


@dataclass
class FilterStats:
    kept: int = 0
    dropped: int = 0


def filter_corpus(reviews: Iterable, ontology: KeywordOntology,
                  stats: FilterStats | None = None) -> Iterator:
    """Yield only the reviews whose text has at least one ontology hit."""
    for review in reviews:
        if matches(review.text, ontology):
            if stats is not None:
                stats.kept += 1
            yield review
        elif stats is not None:
            stats.dropped += 1
