"""County/period perception scores: mean of the ±1 labels with a minimum
relevant-review support rule. Unrelated (9) labels never enter the numerator
or the support count."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .classify import Label, LabeledReview
from .errors import ContractError


@dataclass(frozen=True)
class PerceptionScore:
    fips: str
    period: str
    score: float      # exact ratio of integers: sum(labels) / n_reviews
    n_reviews: int    # count of ±1 labels only


def aggregate_scores(labeled: Iterable[LabeledReview],
                     min_support: int = 10) -> list[PerceptionScore]:
    """One PerceptionScore per (fips, period) with >= min_support relevant labels."""
    if min_support < 1:
        raise ContractError("min_support must be >= 1")
    sums: dict[tuple[str, str], int] = {}
    counts: dict[tuple[str, str], int] = {}
    for item in labeled:
        if item.label == Label.UNRELATED:
            continue
        key = (item.fips, item.period)
        sums[key] = sums.get(key, 0) + int(item.label)
        counts[key] = counts.get(key, 0) + 1
    out = []
    for key in sorted(counts):
        n = counts[key]
        if n < min_support:
            continue
        out.append(PerceptionScore(fips=key[0], period=key[1],
                                   score=sums[key] / n, n_reviews=n))
    return out


@dataclass
class DeltaResult:
    deltas: dict[str, float]       # fips -> score(p2) - score(p1)
    only_in_first: list[str]
    only_in_second: list[str]


def score_delta(first: Iterable[PerceptionScore],
                second: Iterable[PerceptionScore]) -> DeltaResult:
    """Per-county score change between two periods (second minus first)."""
    a = {s.fips: s.score for s in first}
    b = {s.fips: s.score for s in second}
    common = sorted(set(a) & set(b))
    return DeltaResult(
        deltas={f: b[f] - a[f] for f in common},
        only_in_first=sorted(set(a) - set(b)),
        only_in_second=sorted(set(b) - set(a)))


def national_trend(month_labels: Iterable[tuple[str, Label]]
                   ) -> list[tuple[str, float]]:
    """Pooled monthly mean of ±1 labels; months keyed YYYY-MM, sorted."""
    sums: dict[str, int] = {}
    counts: dict[str, int] = {}
    for month, label in month_labels:
        if label == Label.UNRELATED:
            continue
        sums[month] = sums.get(month, 0) + int(label)
        counts[month] = counts.get(month, 0) + 1
    return [(m, sums[m] / counts[m]) for m in sorted(counts)]


def scores_by_period(scores: Iterable[PerceptionScore]
                     ) -> dict[str, dict[str, float]]:
    """period -> {fips -> score} view used by the analysis stages."""
    out: dict[str, dict[str, float]] = {}
    for s in scores:
        out.setdefault(s.period, {})[s.fips] = s.score
    return out


def state_month_scores(items: Iterable[tuple[str, str, Label]]
                       ) -> Mapping[tuple[str, str], float]:
    """Pooled mean ±1 label per (state, YYYY-MM), for survey validation."""
    sums: dict[tuple[str, str], int] = {}
    counts: dict[tuple[str, str], int] = {}
    for state, month, label in items:
        if label == Label.UNRELATED:
            continue
        key = (state, month)
        sums[key] = sums.get(key, 0) + int(label)
        counts[key] = counts.get(key, 0) + 1
    return {k: sums[k] / counts[k] for k in sorted(counts)}
