"""Three-class review labeling (shortage / no shortage / unrelated).

The real classifier is pluggable: a deterministic lexicon cascade for
self-contained runs, a remote HTTP backend speaking a tiny JSON protocol, or
a CSV of precomputed labels. The evaluation metrics (accuracy, per-class
precision/recall/F1, macro-F1, Cohen's kappa) live here too.
"""

from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import (BackendUnavailableError, ContractError, CorpusFormatError,
                     ProtocolError)
from .ontology import Hit, KeywordOntology, tokenize


class Label(enum.IntEnum):
    SHORTAGE = -1
    NO_SHORTAGE = 1
    UNRELATED = 9


_VALID_LABELS = {-1, 1, 9}


@dataclass(frozen=True)
class LabeledReview:
    review_id: str
    fips: str
    period: str
    label: Label


# ---------------------------------------------------------------------------
# lexicon backend

_SHORTAGE_CUES = ["no", "out of", "ran out", "sold out", "empty", "none left",
                  "shortage"]
_AVAILABILITY_CUES = ["in stock", "plenty", "fully stocked", "had",
                      "able to buy", "available"]

# Token distance between a cue and the nearest ontology hit for the cue to
# count. The nearest cue to a hit decides the label; an exact distance tie
# goes to SHORTAGE.
DEFAULT_CUE_WINDOW = 8


def _find_spans(tokens: Sequence[str], phrases: Sequence[str]):
    spans = []
    toklists = [tuple(tokenize(p)) for p in phrases]
    for i in range(len(tokens)):
        for ptoks in toklists:
            n = len(ptoks)
            if i + n <= len(tokens) and tuple(tokens[i:i + n]) == ptoks:
                spans.append((i, i + n))
    return spans


def _gap(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Tokens strictly between two [start, end) spans (0 when adjacent/overlapping)."""
    if a[1] <= b[0]:
        return b[0] - a[1]
    if b[1] <= a[0]:
        return a[0] - b[1]
    return 0


class LexiconClassifier:
    """Deterministic rule cascade around ontology hits.

    A shortage or availability cue within ``window`` tokens of an ontology
    hit decides the label; the cue nearest to any hit wins, shortage on ties;
    no cue in range means UNRELATED.
    """

    def __init__(self, ontology: KeywordOntology, window: int = DEFAULT_CUE_WINDOW):
        self.ontology = ontology
        self.window = window

    def classify(self, text: str) -> Label:
        tokens = tokenize(text)
        hits = self.ontology.find_hits(tokens)
        if not hits:
            return Label.UNRELATED
        hit_spans = [(h.start, h.end) for h in hits]
        best = None  # (distance, 0 for shortage / 1 for availability)
        for cues, kind in ((_SHORTAGE_CUES, 0), (_AVAILABILITY_CUES, 1)):
            for span in _find_spans(tokens, cues):
                dist = min(_gap(span, hs) for hs in hit_spans)
                if dist <= self.window and (best is None or (dist, kind) < best):
                    best = (dist, kind)
        if best is None:
            return Label.UNRELATED
        return Label.SHORTAGE if best[1] == 0 else Label.NO_SHORTAGE

    def classify_batch(self, texts: Sequence[str]) -> list[Label]:
        return [self.classify(t) for t in texts]


# ---------------------------------------------------------------------------
# remote backend


@dataclass
class RemoteConfig:
    base_url: str
    timeout: float = 30.0
    max_batch: int = 64
    retries: int = 3
    backoff: float = 0.5


def classify_remote(texts: Sequence[str], config: RemoteConfig) -> list[Label]:
    """POST text batches to {base}/classify and map the integer labels back.

    Transient failures (connection errors, timeouts, 5xx) are retried with
    exponential backoff up to ``config.retries`` attempts per batch.
    """
    import requests

    if not texts:
        return []
    labels: list[Label] = []
    url = config.base_url.rstrip("/") + "/classify"
    for start in range(0, len(texts), config.max_batch):
        batch = list(texts[start:start + config.max_batch])
        response = None
        last_exc = None
        for attempt in range(config.retries):
            if attempt:
                time.sleep(config.backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(url, json={"texts": batch},
                                         timeout=config.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if response.status_code >= 500:
                last_exc = None
                continue
            break
        if response is None:
            raise BackendUnavailableError(
                f"classifier backend unreachable: {last_exc}")
        if not 200 <= response.status_code < 300:
            raise BackendUnavailableError(
                f"classifier backend returned HTTP {response.status_code}")
        try:
            payload = response.json()
            raw = payload["labels"]
        except (ValueError, KeyError, TypeError):
            raise ProtocolError("response is not a JSON object with 'labels'")
        if not isinstance(raw, list) or len(raw) != len(batch):
            raise ProtocolError(
                f"expected {len(batch)} labels, got "
                f"{len(raw) if isinstance(raw, list) else 'non-list'}")
        for value in raw:
            if not isinstance(value, int) or value not in _VALID_LABELS:
                raise ProtocolError(f"unknown label value {value!r}")
            labels.append(Label(value))
    return labels


# ---------------------------------------------------------------------------
# file backend


def load_labels(stream: IO) -> dict[str, Label]:
    """Read a review_id,label CSV (no header) of precomputed labels."""
    reader = csv.reader(stream)
    out: dict[str, Label] = {}
    for i, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != 2:
            raise CorpusFormatError(f"labels row {i}: expected 2 fields")
        rid, raw = row
        if rid == "review_id" and i == 1:
            continue  # tolerate a header line
        try:
            value = int(raw)
        except ValueError:
            raise CorpusFormatError(f"labels row {i}: label not an integer")
        if value not in _VALID_LABELS:
            raise CorpusFormatError(
                f"labels row {i}: label {value} not in {{-1, 1, 9}}")
        if rid in out:
            raise CorpusFormatError(f"labels row {i}: duplicate review_id {rid!r}")
        out[rid] = Label(value)
    return out


# ---------------------------------------------------------------------------
# evaluation

_CLASS_ORDER = (Label.SHORTAGE, Label.NO_SHORTAGE, Label.UNRELATED)


@dataclass
class EvalReport:
    accuracy: float
    precision: dict[Label, float]
    recall: dict[Label, float]
    f1: dict[Label, float]
    macro_f1: float
    cohen_kappa: float
    confusion: np.ndarray  # rows = gold, cols = predicted, class order -1, 1, 9


def evaluate(pred: Sequence[Label], gold: Sequence[Label]) -> EvalReport:
    """Standard three-class metrics; 0/0 ratios are defined as 0."""
    if len(pred) != len(gold):
        raise ContractError("pred and gold must have equal length")
    if not pred:
        raise ContractError("cannot evaluate an empty prediction set")
    index = {c: i for i, c in enumerate(_CLASS_ORDER)}
    confusion = np.zeros((3, 3), dtype=int)
    for p, g in zip(pred, gold):
        confusion[index[Label(g)], index[Label(p)]] += 1
    n = confusion.sum()
    accuracy = float(np.trace(confusion)) / n

    precision, recall, f1 = {}, {}, {}
    for c, i in index.items():
        tp = confusion[i, i]
        col = confusion[:, i].sum()
        row = confusion[i, :].sum()
        precision[c] = tp / col if col else 0.0
        recall[c] = tp / row if row else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / denom if denom else 0.0
    macro_f1 = sum(f1.values()) / 3.0

    gold_marg = confusion.sum(axis=1) / n
    pred_marg = confusion.sum(axis=0) / n
    p_e = float(gold_marg @ pred_marg)
    if p_e >= 1.0:
        kappa = 1.0 if accuracy == 1.0 else 0.0
    else:
        kappa = (accuracy - p_e) / (1.0 - p_e)
    return EvalReport(accuracy=accuracy, precision=precision, recall=recall,
                      f1=f1, macro_f1=macro_f1, cohen_kappa=kappa,
                      confusion=confusion)
