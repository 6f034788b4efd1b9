"""Spectrum and (k, m)-mismatch string kernels.

Two routes compute the mismatch kernel:

* :func:`mismatch_kernel_bruteforce` expands every k-mer into its full
  Hamming ball and takes the inner product of the resulting count maps.
* :func:`mismatch_kernel` (and the Gram/kappa builders) sum, over all k-mer
  pairs ``(a, b)``, an intersection coefficient ``I(q)`` that only depends on
  the Hamming distance ``q = dist(a, b)``:
  ``I(q) = |{g : dist(g, a) <= m and dist(g, b) <= m}|``.

Raw values are exact integers; cosine normalisation is applied afterwards.
"""

from __future__ import annotations

import itertools
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence as SequenceT

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .seqdata import Alphabet, Sequence

# largest d**k for which I(q) is found by enumerating the whole k-mer space
EXHAUSTIVE_LIMIT = 10**6
# k-mer pair cells per pairwise block (bounds peak memory)
_BLOCK_CELLS = 4_000_000


class KernelError(ValueError):
    """Kernel precondition violated."""


@dataclass(frozen=True)
class KernelParams:
    k: int
    m: int = 0
    normalize: bool = True

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise KernelError(f"k must be a positive integer, got {self.k!r}")
        if int(self.m) != self.m or not 0 <= self.m <= self.k:
            raise KernelError(f"m must satisfy 0 <= m <= k={self.k}, got {self.m!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "normalize", bool(self.normalize))


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    params: KernelParams
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise KernelError(f"Gram matrix must be square, got shape {values.shape}")
        if not np.array_equal(values, values.T):
            raise KernelError("Gram matrix is not symmetric")
        ids = tuple(self.ids)
        if ids and len(ids) != values.shape[0]:
            raise KernelError(f"{len(ids)} ids for a {values.shape[0]}x{values.shape[0]} matrix")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class KappaVector:
    values: np.ndarray
    n_sd: int
    n_td: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != (self.n_sd,):
            raise KernelError(f"kappa must have length n_sd={self.n_sd}, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def _check_length(x: Sequence, k: int):
    if len(x) < k:
        raise KernelError(f"sequence {x.id!r} has length {len(x)} < k={k}")


def _common_alphabet(*groups) -> Alphabet:
    alphabets = {s.alphabet for group in groups for s in group}
    if len(alphabets) != 1:
        raise KernelError("all sequences must share one alphabet")
    return alphabets.pop()


def kmer_counts(x: Sequence, k: int) -> Counter:
    """Count every contiguous length-``k`` window of ``x``.

    Keys are tuples of symbol codes.
    """
    _check_length(x, k)
    codes = x.codes.tolist()
    return Counter(tuple(codes[i:i + k]) for i in range(len(codes) - k + 1))


def ball_size(k: int, m: int, d: int) -> int:
    return sum(math.comb(k, i) * (d - 1) ** i for i in range(m + 1))


def mismatch_neighborhood(gamma, m: int, alphabet: Alphabet) -> set[tuple[int, ...]]:
    """All k-mers within Hamming distance ``m`` of ``gamma``."""
    gamma = tuple(int(c) for c in gamma)
    k = len(gamma)
    if not 0 <= m <= k:
        raise KernelError(f"m must satisfy 0 <= m <= k={k}, got {m}")
    d = alphabet.size
    out = {gamma}
    for n_sub in range(1, m + 1):
        for positions in itertools.combinations(range(k), n_sub):
            choices = [[c for c in range(d) if c != gamma[p]] for p in positions]
            for repl in itertools.product(*choices):
                g = list(gamma)
                for p, c in zip(positions, repl):
                    g[p] = c
                out.add(tuple(g))
    return out


def spectrum_kernel(x: Sequence, y: Sequence, k: int) -> float:
    cx, cy = kmer_counts(x, k), kmer_counts(y, k)
    if len(cy) < len(cx):
        cx, cy = cy, cx
    return float(sum(c * cy[g] for g, c in cx.items() if g in cy))


def mismatch_counts(x: Sequence, k: int, m: int) -> Counter:
    """Mismatch feature map: for every g, how many k-mers of x lie within m of g."""
    feats: Counter = Counter()
    for kmer, c in kmer_counts(x, k).items():
        for g in mismatch_neighborhood(kmer, m, x.alphabet):
            feats[g] += c
    return feats


def mismatch_kernel_bruteforce(x: Sequence, y: Sequence, params: KernelParams) -> int:
    """Raw mismatch kernel by explicit neighbourhood expansion (reference route)."""
    _common_alphabet([x, y])
    fx = mismatch_counts(x, params.k, params.m)
    fy = mismatch_counts(y, params.k, params.m)
    if len(fy) < len(fx):
        fx, fy = fy, fx
    return sum(c * fy[g] for g, c in fx.items() if g in fy)


def _coefficients_exhaustive(k: int, m: int, d: int) -> np.ndarray:
    space = np.array(list(itertools.product(range(d), repeat=k)), dtype=np.int8)
    space = space.reshape(-1, k)
    # a = 0...0; b differs from a in its first q positions
    dist_a = (space != 0).sum(axis=1)
    near_a = dist_a <= m
    out = np.zeros(k + 1, dtype=np.int64)
    for q in range(k + 1):
        b = np.zeros(k, dtype=np.int8)
        b[:q] = 1
        dist_b = (space != b).sum(axis=1)
        out[q] = int(np.count_nonzero(near_a & (dist_b <= m)))
    return out


def _coefficients_closed_form(k: int, m: int, d: int) -> np.ndarray:
    out = np.zeros(k + 1, dtype=np.int64)
    for q in range(k + 1):
        total = 0
        # s: changes on the k-q shared positions; u/v/w: on the q differing
        # positions, copy a / copy b / neither.
        for s in range(min(k - q, m) + 1):
            shared = math.comb(k - q, s) * (d - 1) ** s
            for u in range(q + 1):
                for v in range(q - u + 1):
                    w = q - u - v
                    if s + v + w > m or s + u + w > m:
                        continue
                    if w and d < 3:
                        continue
                    ways = math.factorial(q) // (math.factorial(u) * math.factorial(v) * math.factorial(w))
                    total += shared * ways * (d - 2) ** w
        out[q] = total
    return out


@lru_cache(maxsize=None)
def intersection_coefficients(k: int, m: int, d: int, method: str = "auto") -> np.ndarray:
    """``I(q)`` for ``q = 0..k``: size of the intersection of two radius-``m``
    Hamming balls whose centres are ``q`` apart, in an alphabet of size ``d``.
    """
    if method == "auto":
        method = "exhaustive" if d**k <= EXHAUSTIVE_LIMIT else "closed"
    if method == "exhaustive":
        coef = _coefficients_exhaustive(k, m, d)
    elif method == "closed":
        coef = _coefficients_closed_form(k, m, d)
    else:
        raise ValueError(f"unknown method {method!r}")
    coef.setflags(write=False)
    return coef


def _windows(x: Sequence, k: int) -> np.ndarray:
    _check_length(x, k)
    return sliding_window_view(x.codes, k)


def mismatch_kernel_raw(x: Sequence, y: Sequence, params: KernelParams) -> int:
    alphabet = _common_alphabet([x, y])
    k, m = params.k, params.m
    wx, wy = _windows(x, k), _windows(y, k)
    dist = (wx[:, None, :] != wy[None, :, :]).sum(axis=2)
    hist = np.bincount(dist.ravel(), minlength=k + 1)
    coef = intersection_coefficients(k, m, alphabet.size)
    return int(hist @ coef)


def mismatch_kernel(x: Sequence, y: Sequence, params: KernelParams) -> float:
    """(k, m)-mismatch kernel value, cosine-normalised if ``params.normalize``."""
    raw = mismatch_kernel_raw(x, y, params)
    if not params.normalize:
        return float(raw)
    kxx = mismatch_kernel_raw(x, x, params)
    kyy = mismatch_kernel_raw(y, y, params)
    return raw / math.sqrt(kxx * kyy)


class _KmerBlock:
    """Stacked one-hot k-mer windows of a list of sequences."""

    def __init__(self, seqs: SequenceT[Sequence], k: int, d: int):
        windows = [_windows(s, k) for s in seqs]
        self.counts = np.array([w.shape[0] for w in windows], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64)
        stacked = np.concatenate(windows, axis=0) if windows else np.zeros((0, k), np.int8)
        onehot = np.zeros((stacked.shape[0], k * d), dtype=np.float32)
        cols = (np.arange(k) * d)[None, :] + stacked.astype(np.int64)
        np.put_along_axis(onehot, cols, 1.0, axis=1)
        self.onehot = onehot

    def __len__(self):
        return self.counts.size

    def rows(self, lo: int, hi: int) -> np.ndarray:
        a = self.starts[lo]
        b = self.starts[hi - 1] + self.counts[hi - 1]
        return self.onehot[a:b]


def _match_table(k: int, coef: np.ndarray) -> np.ndarray:
    # indexed by the number of matching positions rather than by distance
    table = coef[::-1]
    if table.max() < 2**31:
        return table.astype(np.int32)
    return table.astype(np.int64)


def _block_sum(vals: np.ndarray, starts: np.ndarray, counts: np.ndarray, axis: int) -> np.ndarray:
    if counts.size and (counts == counts[0]).all():
        shape = list(vals.shape)
        shape[axis:axis + 1] = [counts.size, int(counts[0])]
        return vals.reshape(shape).sum(axis=axis + 1, dtype=np.int64)
    return np.add.reduceat(vals, starts, axis=axis, dtype=np.int64)


def _pair_sums(left: _KmerBlock, lo: int, hi: int, right: _KmerBlock,
               table: np.ndarray) -> np.ndarray:
    # exact: products of float32 one-hot rows are small integers
    matches = (left.rows(lo, hi) @ right.onehot.T).astype(np.uint8)
    vals = table[matches]
    del matches
    per_col = _block_sum(vals, right.starts, right.counts, axis=1)
    del vals
    row_starts = left.starts[lo:hi] - left.starts[lo]
    return _block_sum(per_col, row_starts, left.counts[lo:hi], axis=0)


def _row_chunks(left: _KmerBlock, right_kmers: int):
    per_seq = int(left.counts.max()) * max(right_kmers, 1)
    step = max(1, _BLOCK_CELLS // max(per_seq, 1))
    return [(lo, min(lo + step, len(left))) for lo in range(0, len(left), step)]


def _raw_cross(rows: SequenceT[Sequence], cols: SequenceT[Sequence],
               params: KernelParams, jobs: int = 1) -> np.ndarray:
    d = _common_alphabet(rows, cols).size
    k = params.k
    table = _match_table(k, intersection_coefficients(k, params.m, d))
    left = _KmerBlock(rows, k, d)
    right = _KmerBlock(cols, k, d)
    out = np.zeros((len(rows), len(cols)), dtype=np.int64)
    chunks = _row_chunks(left, right.onehot.shape[0])

    def work(chunk):
        lo, hi = chunk
        out[lo:hi] = _pair_sums(left, lo, hi, right, table)

    _run(work, chunks, jobs)
    return out


def _raw_self(seqs: SequenceT[Sequence], params: KernelParams) -> np.ndarray:
    return np.array([mismatch_kernel_raw(s, s, params) for s in seqs], dtype=np.int64)


def _run(work, chunks, jobs: int):
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(chunks) == 1:
        for c in chunks:
            work(c)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, chunks))


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None or jobs == 0:
        return 1
    if jobs < 0:
        return os.cpu_count() or 1
    return int(jobs)


def _normalize(raw: np.ndarray, row_diag: np.ndarray, col_diag: np.ndarray,
               row_ids, col_ids) -> np.ndarray:
    for diag, ids in ((row_diag, row_ids), (col_diag, col_ids)):
        zero = np.flatnonzero(diag <= 0)
        if zero.size:
            raise KernelError(f"sequence {ids[zero[0]]!r} has zero self-kernel")
    return raw / np.sqrt(np.outer(row_diag.astype(float), col_diag.astype(float)))


def cross_kernel(rows: SequenceT[Sequence], cols: SequenceT[Sequence],
                 params: KernelParams, jobs: int = 1) -> np.ndarray:
    """Kernel values between every sequence in ``rows`` and in ``cols``.

    Returns an ``int64`` array when unnormalised, ``float64`` otherwise.
    """
    if not len(rows) or not len(cols):
        dtype = float if params.normalize else np.int64
        return np.zeros((len(rows), len(cols)), dtype=dtype)
    raw = _raw_cross(rows, cols, params, jobs)
    if not params.normalize:
        return raw
    return _normalize(raw, _raw_self(rows, params), _raw_self(cols, params),
                      [s.id for s in rows], [s.id for s in cols])


def gram_matrix(data: SequenceT[Sequence], params: KernelParams, jobs: int = 1) -> GramMatrix:
    """Symmetric matrix of pairwise kernel values over ``data``.

    The upper triangle (by row chunk) is computed once and mirrored.
    """
    data = list(data)
    ids = tuple(s.id for s in data)
    n = len(data)
    if n == 0:
        return GramMatrix(np.zeros((0, 0)), params, ids)
    d = _common_alphabet(data).size
    k = params.k
    table = _match_table(k, intersection_coefficients(k, params.m, d))
    block = _KmerBlock(data, k, d)
    raw = np.zeros((n, n), dtype=np.int64)
    chunks = _row_chunks(block, block.onehot.shape[0])

    def work(chunk):
        lo, hi = chunk
        # columns lo.. only; the lower-left part is mirrored afterwards
        sub = _KmerBlock.__new__(_KmerBlock)
        sub.counts = block.counts[lo:]
        sub.starts = block.starts[lo:] - block.starts[lo]
        sub.onehot = block.onehot[block.starts[lo]:]
        raw[lo:hi, lo:] = _pair_sums(block, lo, hi, sub, table)

    _run(work, chunks, jobs)
    iu = np.triu_indices(n, 1)
    raw[(iu[1], iu[0])] = raw[iu]
    if params.normalize:
        diag = raw.diagonal().copy()
        values = _normalize(raw, diag, diag, ids, ids)
        values = np.triu(values, 1)
        values = values + values.T
        np.fill_diagonal(values, 1.0)
    else:
        values = raw.astype(float)
    return GramMatrix(values, params, ids)


def kappa_from_cross(cross: np.ndarray) -> KappaVector:
    n_sd, n_td = cross.shape
    if n_td == 0:
        raise KernelError("target set is empty")
    values = (n_sd / n_td) * np.asarray(cross, dtype=float).sum(axis=1)
    return KappaVector(values, n_sd, n_td)


def kappa_vector(source: SequenceT[Sequence], target: SequenceT[Sequence],
                 params: KernelParams, jobs: int = 1) -> KappaVector:
    """``kappa_i = (n_sd / n_td) * sum_j K(source_i, target_j)``."""
    if not len(target):
        raise KernelError("target set is empty")
    if not len(source):
        raise KernelError("source set is empty")
    return kappa_from_cross(cross_kernel(source, target, params, jobs))


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def save_gram(path, gram: GramMatrix):
    p = gram.params
    with open(path, "w") as fh:
        fh.write(f"{gram.n} {p.k} {p.m} {int(p.normalize)}\n")
        for row in gram.values:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def load_gram(path) -> GramMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise KernelError(f"{path}: header must be 'n k m normalized'")
        n, k, m, norm = (int(v) for v in header)
        values = np.loadtxt(fh, ndmin=2) if n else np.zeros((0, 0))
    if values.shape != (n, n):
        raise KernelError(f"{path}: expected {n}x{n} values, got {values.shape}")
    if not np.array_equal(values, values.T):
        raise KernelError(f"{path}: matrix is not symmetric")
    return GramMatrix(values, KernelParams(k, m, bool(norm)))


def save_kappa(path, kappa: KappaVector, params: KernelParams):
    with open(path, "w") as fh:
        fh.write(f"{kappa.n_sd} {params.k} {params.m} {int(params.normalize)} {kappa.n_td}\n")
        for v in kappa.values:
            fh.write(_fmt(v) + "\n")


def load_kappa(path) -> tuple[KappaVector, KernelParams]:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise KernelError(f"{path}: header must be 'n k m normalized n_td'")
        n, k, m, norm, n_td = (int(v) for v in header)
        values = np.loadtxt(fh, ndmin=1) if n else np.zeros(0)
    return KappaVector(values, n, n_td), KernelParams(k, m, bool(norm))
