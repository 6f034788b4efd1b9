"""Kernel Mean Matching importance weights by projected gradient descent.

Minimises ``(1/n^2) b'Kb - (2/n^2) kappa'b`` subject to ``0 <= b_i <= B``
and ``|sum(b) - n| <= n * eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stringkernel import GramMatrix, KappaVector

RIDGE = 1e-8


class KmmError(ValueError):
    """Invalid KMM input or configuration."""


class KmmSolverError(RuntimeError):
    """The solver could not produce a feasible point.

    Carries the last iterate and the objective trace for debugging.
    """

    def __init__(self, message, beta=None, trace=()):
        super().__init__(message)
        self.beta = beta
        self.trace = list(trace)


def default_epsilon(n: int) -> float:
    return (math.sqrt(n) - 1) / math.sqrt(n)


@dataclass(frozen=True)
class KmmConfig:
    """Solver settings.

    ``epsilon=None`` resolves to ``(sqrt(n) - 1) / sqrt(n)`` for the problem
    size at solve time; ``step_size=None`` uses ``1 / L`` with ``L`` the
    gradient Lipschitz constant.
    """

    B: float = 1000.0
    epsilon: float | None = None
    max_iter: int = 10_000
    step_size: float | None = None
    tol: float = 1e-9

    def __post_init__(self):
        if not self.B > 0:
            raise KmmError(f"B must be positive, got {self.B}")
        if self.epsilon is not None and not 0 <= self.epsilon < 1:
            raise KmmError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise KmmError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.step_size is not None and not self.step_size > 0:
            raise KmmError(f"step_size must be positive, got {self.step_size}")
        if not self.tol > 0:
            raise KmmError(f"tol must be positive, got {self.tol}")

    def resolve_epsilon(self, n: int) -> float:
        return default_epsilon(n) if self.epsilon is None else float(self.epsilon)


@dataclass(frozen=True)
class BetaWeights:
    values: np.ndarray
    objective: float
    iterations: int
    B: float
    epsilon: float
    converged: bool = True
    stop_reason: str = "tolerance"
    trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @classmethod
    def ones(cls, n: int) -> "BetaWeights":
        """Unit weights: the no-shift baseline."""
        return cls(np.ones(n), float("nan"), 0, float("inf"), 0.0,
                   stop_reason="fixed")

    def is_feasible(self, atol: float | None = None) -> bool:
        n = self.values.size
        atol = 1e-6 * n if atol is None else atol
        b = self.values
        box = (b >= -atol).all() and (b <= self.B + atol).all()
        return bool(box and abs(b.sum() - n) <= n * self.epsilon + atol)


def _arrays(K, kappa):
    Kv = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    kv = kappa.values if isinstance(kappa, KappaVector) else np.asarray(kappa, dtype=float)
    if Kv.ndim != 2 or Kv.shape[0] != Kv.shape[1]:
        raise KmmError(f"K must be square, got shape {Kv.shape}")
    if kv.shape != (Kv.shape[0],):
        raise KmmError(f"kappa has length {kv.size}, K is {Kv.shape[0]}x{Kv.shape[0]}")
    return Kv, kv


def kmm_objective(beta, K, kappa) -> float:
    """Mean-discrepancy objective without its constant term."""
    Kv, kv = _arrays(K, kappa)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != kv.shape:
        raise KmmError(f"beta has length {beta.size}, expected {kv.size}")
    n = kv.size
    return float((beta @ Kv @ beta - 2.0 * kv @ beta) / n**2)


def project(v: np.ndarray, B: float, lower: float, upper: float) -> np.ndarray:
    """Euclidean projection onto ``{0 <= b <= B, lower <= sum(b) <= upper}``.

    The projection is ``clip(v - tau, 0, B)`` for the scalar ``tau`` that
    brings the sum into range (``tau = 0`` if it already is).
    """
    clipped = np.clip(v, 0.0, B)
    s = clipped.sum()
    if lower <= s <= upper:
        return clipped
    goal = lower if s < lower else upper
    # sum(clip(v - tau)) is non-increasing in tau
    lo, hi = float(v.min() - B), float(v.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, B).sum() > goal:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    out = np.clip(v - 0.5 * (lo + hi), 0.0, B)
    # remove the residual bisection error on the free coordinates
    free = (out > 0) & (out < B)
    if free.any():
        out[free] += (goal - out.sum()) / free.sum()
        out = np.clip(out, 0.0, B)
    return out


def power_iteration(A: np.ndarray, iters: int = 200, rtol: float = 1e-10) -> float:
    n = A.shape[0]
    v = np.ones(n) / math.sqrt(n)
    lam = 0.0
    for _ in range(iters):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ A @ v)
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    return lam


def solve_beta(K, kappa, config: KmmConfig = KmmConfig()) -> BetaWeights:
    """Importance weights for the source samples behind ``K`` and ``kappa``."""
    Kv, kv = _arrays(K, kappa)
    n = kv.size
    if n == 0:
        raise KmmError("empty problem")
    eps = config.resolve_epsilon(n)
    B = float(config.B)
    lower, upper = max(0.0, n * (1 - eps)), n * (1 + eps)
    if lower > n * B:
        raise KmmSolverError(
            f"infeasible: sum constraint needs >= {lower:g} but box allows {n * B:g}")

    A = 0.5 * (Kv + Kv.T) + RIDGE * np.eye(n)

    def objective(b):
        return float((b @ A @ b - 2.0 * kv @ b) / n**2)

    if config.step_size is None:
        # small inflation keeps the step safely below 1/L
        lipschitz = 2.0 * power_iteration(A) * 1.01 / n**2
        step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    else:
        step = float(config.step_size)

    beta = project(np.ones(n), B, lower, upper)
    obj = objective(beta)
    trace = [obj]
    reason, converged, it = "max_iter", False, 0
    for it in range(1, config.max_iter + 1):
        grad = 2.0 * (A @ beta - kv) / n**2
        cand = project(beta - step * grad, B, lower, upper)
        cand_obj = objective(cand)
        # backtrack if the Lipschitz estimate was too optimistic
        while cand_obj > obj + 1e-12 * (1 + abs(obj)) and step > 1e-300:
            step *= 0.5
            cand = project(beta - step * grad, B, lower, upper)
            cand_obj = objective(cand)
        change = abs(cand_obj - obj)
        beta, obj = cand, cand_obj
        trace.append(obj)
        if change <= config.tol * (1 + abs(obj)):
            reason, converged = "tolerance", True
            break

    if not np.isfinite(beta).all():
        raise KmmSolverError("solver diverged", beta, trace)
    # the trace tracks the ridged problem; report the objective on K itself
    final = kmm_objective(beta, Kv, kv)
    result = BetaWeights(beta, final, it, B, eps, converged, reason, tuple(trace))
    if not result.is_feasible():
        raise KmmSolverError("final iterate violates the constraints", beta, trace)
    return result


def save_beta(path, beta: BetaWeights):
    with open(path, "w") as fh:
        fh.write(f"# B={beta.B:.17g} epsilon={beta.epsilon:.17g} "
                 f"iterations={beta.iterations} objective={beta.objective:.17g} "
                 f"stop={beta.stop_reason}\n")
        for i, v in enumerate(beta.values):
            fh.write(f"{i}\t{v:.17g}\n")


def load_beta(path) -> BetaWeights:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise KmmError(f"{path}: missing header line")
        meta = dict(item.split("=", 1) for item in header[1:].split())
        rows = np.loadtxt(fh, ndmin=2)
    if rows.size and not np.array_equal(rows[:, 0], np.arange(len(rows))):
        raise KmmError(f"{path}: indices must run 0..n-1 in order")
    values = rows[:, 1] if rows.size else np.zeros(0)
    stop = meta.get("stop", "tolerance")
    return BetaWeights(values, float(meta["objective"]), int(meta["iterations"]),
                       float(meta["B"]), float(meta["epsilon"]),
                       stop in ("tolerance", "fixed"), stop)
