"""ROC AUC, evaluation reports and the conservation score."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import rankdata


class EvalError(ValueError):
    pass


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvalError(f"{scores.size} scores for {labels.size} labels")
    pos = labels > 0
    if not np.isin(labels, (-1, 1)).all():
        raise EvalError("labels must be +1 or -1")
    if pos.all() or not pos.any():
        raise EvalError("AUC needs both positive and negative samples")
    return scores, pos


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Tied scores get midranks, so every tied positive/negative pair counts 1/2.
    """
    scores, pos = _check_binary(scores, labels)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    ranks = rankdata(scores, method="average")
    # midranks are half-integers, so this numerator is exact
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_pairs(scores, labels) -> float:
    """Reference AUC by explicit enumeration of positive/negative pairs."""
    scores, pos = _check_binary(scores, labels)
    sp, sn = scores[pos], scores[~pos]
    wins = (sp[:, None] > sn[None, :]).sum() + 0.5 * (sp[:, None] == sn[None, :]).sum()
    return float(wins / (sp.size * sn.size))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """False and true positive rates at every distinct score threshold."""
    scores, pos = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    tps = np.cumsum(p)
    fps = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tpr = np.r_[0.0, tps[last] / tps[-1]]
    fpr = np.r_[0.0, fps[last] / fps[-1]]
    return fpr, tpr


@dataclass(frozen=True)
class EvalReport:
    auc: float
    n_pos: int
    n_neg: int
    rows: tuple[tuple[str, float, int], ...] = field(default=(), repr=False)

    @classmethod
    def from_scores(cls, ids, scores, labels) -> "EvalReport":
        scores = np.asarray(scores, dtype=float)
        labels = np.asarray(labels, dtype=int)
        auc = roc_auc(scores, labels)
        rows = tuple((str(i), float(s), int(y)) for i, s, y in zip(ids, scores, labels))
        return cls(auc, int((labels > 0).sum()), int((labels < 0).sum()), rows)

    def to_tsv(self) -> str:
        lines = ["id\tscore\tlabel"]
        lines += [f"{i}\t{s:.6f}\t{y:+d}" for i, s, y in self.rows]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"auc": round(self.auc, 6), "n_pos": self.n_pos, "n_neg": self.n_neg}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def read_report_tsv(text: str) -> tuple[list[str], np.ndarray, np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t")[:3] != ["id", "score", "label"]:
        raise EvalError("expected a header 'id<TAB>score<TAB>label'")
    ids, scores, labels = [], [], []
    for ln in lines[1:]:
        i, s, y = ln.split("\t")[:3]
        ids.append(i)
        scores.append(float(s))
        labels.append(int(y))
    return ids, np.array(scores), np.array(labels)


@dataclass(frozen=True)
class ConservationInput:
    """Per-position conservation scores; ``None``/NaN marks a position with no
    reported score (non-conserved)."""

    scores: tuple[float | None, ...]

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(self.scores))

    @property
    def total(self) -> int:
        return len(self.scores)

    @property
    def scored(self) -> np.ndarray:
        vals = np.array([np.nan if s is None else float(s) for s in self.scores])
        return vals[~np.isnan(vals)]

    @property
    def non_conserved(self) -> int:
        return self.total - self.scored.size


def cs_value(pos_score: float, neg_score: float, c_n: int, c_t: int) -> float:
    """``log(pos) - log(|neg|) - log(c_n / c_t) / 100``, natural logs."""
    if not pos_score > 0:
        raise EvalError(f"positive-score mass must be > 0, got {pos_score}")
    if neg_score == 0:
        raise EvalError("negative-score mass is zero")
    if c_t <= 0 or not 0 < c_n <= c_t:
        raise EvalError(f"need 0 < C_n <= C_t, got C_n={c_n}, C_t={c_t}")
    penalty = math.log(c_n / c_t) / 100.0
    return math.log(pos_score) - math.log(abs(neg_score)) - penalty


def conservation_score(data: ConservationInput | Iterable[float | None]) -> float:
    """Conservation score from per-position scores.

    Positive and negative masses are each normalised by the number of
    positions contributing to them.
    """
    if not isinstance(data, ConservationInput):
        data = ConservationInput(tuple(data))
    vals = data.scored
    pos, neg = vals[vals > 0], vals[vals < 0]
    if pos.size == 0:
        raise EvalError("PosScore undefined: no positively scored positions")
    if neg.size == 0:
        raise EvalError("NegScore undefined: no negatively scored positions")
    if data.non_conserved == 0:
        raise EvalError("C_n = 0: penalty log(C_n / C_t) undefined")
    return cs_value(pos.mean(), neg.mean(), data.non_conserved, data.total)


MISSING_MARKERS = {"NA", "NAN", ".", "-", "NONE"}


def parse_conservation(text: str) -> ConservationInput:
    scores: list[float | None] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        for tok in line.split():
            if tok.upper() in MISSING_MARKERS:
                scores.append(None)
                continue
            try:
                scores.append(float(tok))
            except ValueError:
                raise EvalError(f"line {lineno}: cannot parse score {tok!r}") from None
    return ConservationInput(tuple(scores))
