"""Transfer String Kernel pipeline and hyperparameter grid search.

The pipeline is: mismatch Gram matrix over the labeled source and kappa
against the unlabeled target, KMM weights, weighted SVM, then target scores.
With KMM switched off the weights are all one and this is the plain
string-kernel SVM.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence as SequenceT

import numpy as np

from .evaluation import roc_auc
from .kmm import BetaWeights, KmmConfig, solve_beta
from .seqdata import LabeledDataset, Sequence
from .stringkernel import (GramMatrix, KappaVector, KernelParams, cross_kernel,
                           gram_matrix, kappa_from_cross)
from .wsvm import SvmModel, SvmTrainConfig, decision_scores_from_kernel, train_weighted_svm

log = logging.getLogger(__name__)

PAPER_K = (8, 10, 12)
PAPER_M = (1, 2, 3)
PAPER_C = (0.1, 1.0, 10.0, 100.0, 1000.0)


@dataclass
class TskFit:
    params: KernelParams
    gram: GramMatrix
    kappa: KappaVector | None
    beta: BetaWeights
    model: SvmModel


def _same_sequences(a, b) -> bool:
    return len(a) == len(b) and all(x is y for x, y in zip(a, b))


class KernelCache:
    """Kernel blocks for one (source, target, evaluation) triple, per (k, m)."""

    def __init__(self, source: SequenceT[Sequence], target: SequenceT[Sequence] | None = None,
                 evaluate: SequenceT[Sequence] = (), normalize: bool = True, jobs: int = 1):
        self.source = list(source)
        self.target = list(target) if target is not None else None
        self.evaluate = list(evaluate)
        self.normalize = normalize
        self.jobs = jobs
        self._cache: dict = {}

    def params(self, k, m) -> KernelParams:
        return KernelParams(k, m, self.normalize)

    def gram(self, k, m) -> GramMatrix:
        key = ("gram", k, m)
        if key not in self._cache:
            self._cache[key] = gram_matrix(self.source, self.params(k, m), self.jobs)
        return self._cache[key]

    def cross(self, which, k, m) -> np.ndarray:
        seqs = self.target if which == "target" else self.evaluate
        key = ("cross", k, m, which)
        if key not in self._cache:
            other = "evaluate" if which == "target" else "target"
            other_seqs = self.evaluate if which == "target" else self.target
            if other_seqs is not None and _same_sequences(seqs, other_seqs) \
                    and ("cross", k, m, other) in self._cache:
                self._cache[key] = self._cache[("cross", k, m, other)]
            else:
                self._cache[key] = np.asarray(
                    cross_kernel(self.source, seqs, self.params(k, m), self.jobs), dtype=float)
        return self._cache[key]

    def kappa(self, k, m) -> KappaVector:
        if not self.target:
            raise ValueError("KMM needs unlabeled target sequences")
        return kappa_from_cross(self.cross("target", k, m))


def fit_tsk(source: LabeledDataset, target: SequenceT[Sequence] | None, params: KernelParams,
            svm_config: SvmTrainConfig = SvmTrainConfig(),
            kmm_config: KmmConfig | None = KmmConfig(), jobs: int = 1,
            cache: KernelCache | None = None) -> TskFit:
    """Train one model.

    ``kmm_config=None`` disables reweighting (unit weights).
    """
    if cache is None:
        cache = KernelCache(source.sequences, target, normalize=params.normalize, jobs=jobs)
    gram = cache.gram(params.k, params.m)
    if kmm_config is None:
        kappa = None
        beta = BetaWeights.ones(len(source))
    else:
        kappa = cache.kappa(params.k, params.m)
        beta = solve_beta(gram, kappa, kmm_config)
    model = train_weighted_svm(gram, source.labels, beta, svm_config, source.sequences)
    return TskFit(params, gram, kappa, beta, model)


@dataclass(frozen=True)
class GridRow:
    k: int
    m: int
    C: float
    auc: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True)
class GridSearchRecord:
    rows: tuple[GridRow, ...]
    selected: GridRow

    def to_tsv(self) -> str:
        lines = ["k\tm\tC\tauc\terror"]
        for r in self.rows:
            auc = "nan" if r.error else f"{r.auc:.6f}"
            lines.append(f"{r.k}\t{r.m}\t{r.C:.6f}\t{auc}\t{r.error}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        s = self.selected
        return {"selected": {"k": s.k, "m": s.m, "C": s.C, "auc": round(s.auc, 6)},
                "cells": len(self.rows), "failed": sum(not r.ok for r in self.rows)}


def select_best(rows: SequenceT[GridRow]) -> GridRow:
    """Highest AUC; ties go to the smallest k, then m, then C."""
    good = [r for r in rows if r.ok]
    if not good:
        reasons = "; ".join(f"(k={r.k}, m={r.m}, C={r.C:g}): {r.error}" for r in rows)
        raise ValueError(f"every grid cell failed: {reasons}")
    return min(good, key=lambda r: (-r.auc, r.k, r.m, r.C))


@dataclass(frozen=True)
class Grid:
    k: tuple[int, ...] = PAPER_K
    m: tuple[int, ...] = PAPER_M
    C: tuple[float, ...] = PAPER_C

    def __post_init__(self):
        for name in ("k", "m", "C"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"grid over {name} is empty")
            object.__setattr__(self, name, vals)

    def cells(self):
        return itertools.product(self.k, self.m, self.C)


def grid_search(train: LabeledDataset, validation: LabeledDataset,
                target_unlabeled: SequenceT[Sequence] | None, grid: Grid = Grid(),
                use_kmm: bool = True, kmm_config: KmmConfig = KmmConfig(),
                svm_config: SvmTrainConfig = SvmTrainConfig(), normalize: bool = True,
                jobs: int = 1) -> GridSearchRecord:
    """Score every (k, m, C) cell on ``validation`` and pick the best.

    Kernels and KMM weights depend on (k, m) only and are shared across C.
    A failing cell is recorded with its reason and skipped in selection.
    """
    target = list(target_unlabeled) if target_unlabeled is not None else list(validation.sequences)
    cache = KernelCache(train.sequences, target, validation.sequences, normalize, jobs)
    rows = []
    for k, m in itertools.product(grid.k, grid.m):
        try:
            gram = cache.gram(k, m)
            beta = solve_beta(gram, cache.kappa(k, m), kmm_config) if use_kmm \
                else BetaWeights.ones(len(train))
            K_val = cache.cross("evaluate", k, m)
        except Exception as exc:  # recorded per cell
            log.warning("grid cell k=%s m=%s failed: %s", k, m, exc)
            rows.extend(GridRow(k, m, float(C), error=_reason(exc)) for C in grid.C)
            continue
        for C in grid.C:
            try:
                cfg = SvmTrainConfig(float(C), svm_config.tol, svm_config.max_passes)
                model = train_weighted_svm(gram, train.labels, beta, cfg, train.sequences)
                scores = decision_scores_from_kernel(model, K_val)
                rows.append(GridRow(k, m, float(C), roc_auc(scores, validation.labels)))
            except Exception as exc:
                log.warning("grid cell k=%s m=%s C=%s failed: %s", k, m, C, exc)
                rows.append(GridRow(k, m, float(C), error=_reason(exc)))
    return GridSearchRecord(tuple(rows), select_best(rows))


def _reason(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}".replace("\t", " ").replace("\n", " ")
