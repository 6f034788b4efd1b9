"""Instance-weighted SVM on a precomputed kernel.

Dual problem::

    max  sum(a) - 0.5 * sum_ij a_i a_j y_i y_j K_ij
    s.t. sum(a * y) = 0,  0 <= a_i <= beta_i * C

solved with SMO using maximal-violating-pair working set selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence as SequenceT

import numpy as np

from .kmm import BetaWeights
from .seqdata import Sequence, get_alphabet
from .stringkernel import GramMatrix, KernelParams, cross_kernel

_TAU = 1e-12


class SvmError(ValueError):
    """Invalid SVM input."""


@dataclass(frozen=True)
class SvmTrainConfig:
    """SMO settings.

    ``max_passes`` bounds the number of pair updates at ``max_passes * n``.
    """

    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10_000

    def __post_init__(self):
        if not self.C > 0:
            raise SvmError(f"C must be positive, got {self.C}")
        if not self.tol > 0:
            raise SvmError(f"tol must be positive, got {self.tol}")
        if int(self.max_passes) != self.max_passes or self.max_passes < 1:
            raise SvmError(f"max_passes must be a positive integer, got {self.max_passes}")


@dataclass(frozen=True)
class SvmModel:
    alphas: np.ndarray
    b: float
    labels: np.ndarray
    caps: np.ndarray
    params: KernelParams | None = None
    sequences: tuple[Sequence, ...] = field(default=(), repr=False)
    C: float = 1.0
    tol: float = 1e-3
    converged: bool = True
    kkt_violation: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        for name in ("alphas", "labels", "caps"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sequences", tuple(self.sequences))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 0)

    @property
    def dual_coef(self) -> np.ndarray:
        """``alpha_i * y_i``."""
        return self.alphas * self.labels


def dual_objective(alphas, labels, K) -> float:
    a = np.asarray(alphas, dtype=float)
    ay = a * np.asarray(labels, dtype=float)
    Kv = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    return float(a.sum() - 0.5 * ay @ Kv @ ay)


def _bias(v, alphas, labels, caps, eps=1e-12):
    active = caps > 0
    free = active & (alphas > eps * caps) & (alphas < caps * (1 - eps))
    if free.any():
        return float(v[free].mean())
    at_zero = active & ~free & (alphas <= eps * caps)
    at_cap = active & ~free & ~at_zero
    # b >= v_i or b <= v_i depending on the bound each sample sits at
    lower_mask = (at_zero & (labels > 0)) | (at_cap & (labels < 0))
    upper_mask = (at_zero & (labels < 0)) | (at_cap & (labels > 0))
    lo = v[lower_mask].max() if lower_mask.any() else None
    hi = v[upper_mask].min() if upper_mask.any() else None
    if lo is None and hi is None:
        return 0.0
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def kkt_violations(alphas, labels, caps, K, b, eps=1e-12) -> np.ndarray:
    """Per-sample amount by which the margin conditions fail (0 when satisfied)."""
    Kv = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    a = np.asarray(alphas, dtype=float)
    y = np.asarray(labels, dtype=float)
    caps = np.asarray(caps, dtype=float)
    margin = y * (Kv @ (a * y) + b)
    out = np.zeros_like(margin)
    active = caps > 0
    at_zero = active & (a <= eps * caps)
    at_cap = active & (a >= caps * (1 - eps))
    free = active & ~at_zero & ~at_cap
    out[at_zero] = np.maximum(0.0, 1 - margin[at_zero])
    out[at_cap] = np.maximum(0.0, margin[at_cap] - 1)
    out[free] = np.abs(margin[free] - 1)
    return out


def train_weighted_svm(K, labels, beta=None, config: SvmTrainConfig = SvmTrainConfig(),
                       sequences: SequenceT[Sequence] = ()) -> SvmModel:
    """Fit the weighted dual on Gram matrix ``K``.

    ``beta`` may be a :class:`BetaWeights`, an array, or ``None`` for unit
    weights. The per-sample cap is ``beta_i * C``; samples with zero weight
    never enter the working set, so their multiplier stays exactly 0.
    """
    Kv = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    params = K.params if isinstance(K, GramMatrix) else None
    n = Kv.shape[0]
    if Kv.ndim != 2 or Kv.shape != (n, n):
        raise SvmError(f"K must be square, got shape {Kv.shape}")
    y = np.asarray(labels, dtype=float)
    if y.shape != (n,):
        raise SvmError(f"{y.size} labels for a {n}x{n} kernel")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise SvmError("labels must be +1 or -1")
    if (y > 0).all() or (y < 0).all():
        raise SvmError("training labels contain a single class")
    if beta is None:
        w = np.ones(n)
    else:
        w = np.asarray(beta.values if isinstance(beta, BetaWeights) else beta, dtype=float)
    if w.shape != (n,):
        raise SvmError(f"{w.size} weights for {n} samples")
    if (w < 0).any():
        raise SvmError("sample weights must be non-negative")
    if sequences and len(sequences) != n:
        raise SvmError(f"{len(sequences)} sequences for {n} samples")

    caps = w * config.C
    a = np.zeros(n)
    G = -np.ones(n)
    diag = Kv.diagonal()
    max_iter = config.max_passes * n
    converged = False
    it = 0
    while it < max_iter:
        v = -y * G
        up = ((y > 0) & (a < caps)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < caps))
        if not up.any() or not low.any():
            converged = True
            break
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gap = vu[i] - vl[j]
        if gap <= config.tol:
            converged = True
            break
        it += 1
        eta = diag[i] + diag[j] - 2.0 * Kv[i, j]
        t = gap / max(eta, _TAU)
        lim_i = caps[i] - a[i] if y[i] > 0 else a[i]
        lim_j = a[j] if y[j] > 0 else caps[j] - a[j]
        t = min(t, lim_i, lim_j)
        a[i] += y[i] * t
        a[j] -= y[j] * t
        # pin to exact bounds when a limit was hit
        for idx, lim in ((i, lim_i), (j, lim_j)):
            if t == lim:
                a[idx] = caps[idx] if (idx == i) == (y[idx] > 0) else 0.0
        G += t * y * (Kv[:, i] - Kv[:, j])

    G = y * (Kv @ (a * y)) - 1.0
    b = _bias(-y * G, a, y, caps)
    viol = kkt_violations(a, y, caps, Kv, b)
    return SvmModel(a, b, y, caps, params, tuple(sequences), config.C, config.tol,
                    converged, float(viol.max(initial=0.0)), it)


def _support_view(model: SvmModel):
    idx = model.support
    if not model.sequences:
        raise SvmError("model has no training sequences attached")
    return [model.sequences[i] for i in idx], model.dual_coef[idx]


def _weighted_columns(coef, K):
    # row-wise accumulation sums every column in the same order, so a score
    # does not depend on which other queries share the batch (BLAS may not)
    return (coef[:, None] * K).sum(axis=0)


def decision_scores_from_kernel(model: SvmModel, K_train_x) -> np.ndarray:
    """Scores from a precomputed ``(n_train, n_query)`` kernel block."""
    K_train_x = np.asarray(K_train_x, dtype=float)
    return _weighted_columns(model.dual_coef, K_train_x) + model.b


def predict_batch(model: SvmModel, data: SequenceT[Sequence], jobs: int = 1) -> list[tuple[str, float]]:
    """``(id, f(x))`` for every sequence, with ``f(x) = sum a_i y_i K(x_i, x) + b``."""
    data = list(data)
    if not data:
        return []
    if model.params is None:
        raise SvmError("model has no kernel parameters")
    svs, coef = _support_view(model)
    if not svs:
        return [(s.id, float(model.b)) for s in data]
    for s in data:
        if len(s) < model.params.k:
            raise SvmError(f"sequence {s.id!r}: length {len(s)} < k={model.params.k}")
    K = cross_kernel(svs, data, model.params, jobs)
    scores = _weighted_columns(coef, np.asarray(K, dtype=float)) + model.b
    return [(s.id, float(f)) for s, f in zip(data, scores)]


def decision_score(model: SvmModel, x: Sequence) -> float:
    return predict_batch(model, [x])[0][1]


def save_model(path, model: SvmModel):
    if model.params is None or not model.sequences:
        raise SvmError("only models with kernel parameters and sequences can be saved")
    p = model.params
    idx = model.support
    alphabet = model.sequences[0].alphabet.name
    with open(path, "w") as fh:
        fh.write(f"# k={p.k} m={p.m} normalize={int(p.normalize)} C={model.C:.17g} "
                 f"b={model.b:.17g} n_support={idx.size} alphabet={alphabet} "
                 f"tol={model.tol:.17g}\n")
        for i in idx:
            s = model.sequences[i]
            fh.write(f"{i}\t{model.alphas[i]:.17g}\t{int(model.labels[i]):+d}\t{s}\t{s.id}\n")


def load_model(path) -> SvmModel:
    """Read a saved model; it keeps only the support vectors."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise SvmError(f"{path}: missing header line")
        meta = dict(item.split("=", 1) for item in header[1:].split())
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    alphabet = get_alphabet(meta["alphabet"])
    n_support = int(meta["n_support"])
    if len(rows) != n_support:
        raise SvmError(f"{path}: header says {n_support} support vectors, found {len(rows)}")
    alphas = np.array([float(r[1]) for r in rows])
    labels = np.array([float(r[2]) for r in rows])
    seqs = tuple(Sequence.from_string(r[4] if len(r) > 4 else r[0], r[3], alphabet) for r in rows)
    tol = float(meta.get("tol", 1e-3))
    if (alphas <= 0).any():
        raise SvmError(f"{path}: support vectors must have positive alpha")
    if not np.isin(labels, (-1.0, 1.0)).all():
        raise SvmError(f"{path}: labels must be +1 or -1")
    if abs(alphas @ labels) > max(tol, 1e-9) * max(1.0, alphas.sum()):
        raise SvmError(f"{path}: sum(alpha * y) = {alphas @ labels:g} violates the equality constraint")
    C = float(meta["C"])
    params = KernelParams(int(meta["k"]), int(meta["m"]), bool(int(meta["normalize"])))
    return SvmModel(alphas, float(meta["b"]), labels, np.full(n_support, np.inf), params,
                    seqs, C, tol)
