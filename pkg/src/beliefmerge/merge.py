"""Belief fusion: closed-form KL merges, visit-weighted merge, numeric baselines.

The two closed forms are the exact minimizers of the weighted forward and
reverse KL objectives (arithmetic mean and logarithmic opinion pool). The
numeric merges minimize the same objectives by projected gradient descent on
the simplex with a lower bound ``epsilon_floor`` on every entry, which is how
generic solvers are usually set up and is where their artifacts come from.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .belief import NORM_TOL, Belief, ShapeMismatch, _check_same_shape, kl_divergence


class DegenerateProduct(ArithmeticError):
    """Weighted geometric pool has an all-zero normalizer (disjoint supports)."""


class DegenerateSum(ArithmeticError):
    pass


class InfeasibleFloor(ValueError):
    pass


class TooLarge(ValueError):
    pass


class MergeStrategy(str, enum.Enum):
    NUMERIC_FORWARD_KL = "forward_kl"
    NUMERIC_REVERSE_KL = "reverse_kl"
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"
    VISIT_WEIGHTED = "visit_weighted"

    @property
    def is_numeric(self) -> bool:
        return self in (MergeStrategy.NUMERIC_FORWARD_KL, MergeStrategy.NUMERIC_REVERSE_KL)


@dataclass(frozen=True)
class SolverParams:
    epsilon_floor: float = 1e-5
    max_iterations: int = 2000
    step_size: float = 0.1
    quantization_levels: Optional[int] = None
    tol: float = 1e-10

    def __post_init__(self):
        if not self.epsilon_floor > 0:
            raise ValueError("epsilon_floor must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.quantization_levels is not None and self.quantization_levels < 1:
            raise ValueError("quantization_levels must be a positive integer")


@dataclass(frozen=True)
class NumericMergeResult:
    belief: Belief
    converged: bool
    iterations: int
    objective: float
    floor_mass: float


# -- weights and objectives ---------------------------------------------------

def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def check_weights(weights, n: int) -> np.ndarray:
    """Validate scalar agent weights; ``None`` means uniform."""
    if weights is None:
        return uniform_weights(n)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != n:
        raise ValueError(f"expected {n} weights, got {w.size}")
    if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > NORM_TOL:
        raise ValueError("weights must lie in [0, 1] and sum to 1")
    return w


def _stack(beliefs: Sequence[Belief]) -> np.ndarray:
    if len(beliefs) == 0:
        raise ValueError("need at least one belief")
    _check_same_shape(*beliefs)
    return np.stack([b.mass for b in beliefs])


def forward_kl_objective(beliefs: Sequence[Belief], weights, q: Belief) -> float:
    """sum_i w_i D(b_i || q)."""
    w = check_weights(weights, len(beliefs))
    _check_same_shape(*beliefs, q)
    return float(sum(wi * kl_divergence(b, q) for wi, b in zip(w, beliefs) if wi > 0))


def reverse_kl_objective(beliefs: Sequence[Belief], weights, q: Belief) -> float:
    """sum_i w_i D(q || b_i)."""
    w = check_weights(weights, len(beliefs))
    _check_same_shape(*beliefs, q)
    return float(sum(wi * kl_divergence(q, b) for wi, b in zip(w, beliefs) if wi > 0))


# -- closed forms ------------------------------------------------------------

def arithmetic_merge(beliefs: Sequence[Belief], weights=None) -> Belief:
    """Exact minimizer of the weighted forward KL objective."""
    B = _stack(beliefs)
    w = check_weights(weights, len(beliefs))
    q = w @ B
    # a convex combination of distributions is already normalized
    assert abs(q.sum() - 1.0) <= NORM_TOL
    return Belief(beliefs[0].shape, q)


def geometric_merge(beliefs: Sequence[Belief], weights=None, *, strict: bool = False) -> Belief:
    """Logarithmic opinion pool, the exact minimizer of the weighted reverse KL.

    Cells where any positively weighted agent has zero mass get zero mass.
    When no cell survives, falls back to the uniform distribution unless
    ``strict`` is set, in which case DegenerateProduct is raised.
    """
    B = _stack(beliefs)
    w = check_weights(weights, len(beliefs))
    active = w > 0
    B, w = B[active], w[active]
    with np.errstate(divide="ignore"):
        logs = np.log(B)
    zero = np.any(B == 0.0, axis=0)
    logpool = np.where(zero, -np.inf, w @ np.where(zero, 0.0, logs))
    shape = beliefs[0].shape
    if np.all(zero):
        if strict:
            raise DegenerateProduct("beliefs have disjoint supports")
        return Belief(shape, np.full(shape.size, 1.0 / shape.size))
    # shift by the max log before exponentiating to avoid underflow
    pool = np.exp(logpool - logpool[~zero].max())
    return Belief(shape, pool / pool.sum())


def visit_weights(visits) -> np.ndarray:
    """Laplace-smoothed per-cell agent weights, shape (N, |S|); columns sum to 1."""
    v = np.asarray(visits)
    if v.ndim != 2 or v.shape[0] < 1:
        raise ValueError("visit counts must be an (N, |S|) matrix with N >= 1")
    if np.any(v < 0):
        raise ValueError("visit counts must be nonnegative")
    smoothed = v.astype(float) + 1.0
    return smoothed / smoothed.sum(axis=0)


def visit_weighted_merge(beliefs: Sequence[Belief], visits) -> Belief:
    B = _stack(beliefs)
    W = visit_weights(visits)
    if W.shape != B.shape:
        raise ShapeMismatch(f"visit matrix {W.shape} does not match beliefs {B.shape}")
    pooled = np.einsum("is,is->s", W, B)
    total = pooled.sum()
    if not total > 0.0:
        # unreachable for valid beliefs: every weight is strictly positive
        raise DegenerateSum("visit-weighted pool has zero total mass")
    return Belief(beliefs[0].shape, pooled / total)


# -- numeric baselines -------------------------------------------------------

def floor_mass(size: int, epsilon_floor: float) -> float:
    """Probability mass reserved by the lower bound before any data is fit."""
    return size * epsilon_floor


def project_simplex(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = radius}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_floored_simplex(v: np.ndarray, epsilon_floor: float) -> np.ndarray:
    """Euclidean projection onto {x >= epsilon_floor, sum(x) = 1}."""
    n = v.size
    if epsilon_floor * n >= 1.0:
        raise InfeasibleFloor(f"floor {epsilon_floor} times {n} cells leaves no free mass")
    return project_simplex(v - epsilon_floor, 1.0 - n * epsilon_floor) + epsilon_floor


def _pl_table(f, lo: float, levels: int):
    knots = np.linspace(lo, 1.0, levels + 1)
    vals = f(knots)
    slopes = np.diff(vals) / np.diff(knots)
    return knots, vals, slopes


def _pl_eval(x, knots, vals, slopes):
    seg = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, slopes.size - 1)
    return vals[seg] + slopes[seg] * (x - knots[seg]), slopes[seg]


def _forward_terms(B, w, params: SolverParams):
    """Value/gradient oracle for the forward objective over the floored box."""
    m = w @ B
    const = float(np.sum(w @ xlogy(B, B)))
    if params.quantization_levels:
        table = _pl_table(np.log, params.epsilon_floor, params.quantization_levels)

        def oracle(q):
            g, dg = _pl_eval(q, *table)
            return const - float(m @ g), -m * dg
    else:
        def oracle(q):
            return const - float(m @ np.log(q)), -m / q
    return oracle


def _reverse_terms(B, w, params: SolverParams):
    """Value/gradient oracle for the reverse objective over the floored box.

    Agent beliefs are floored inside the logarithm so the objective stays
    finite when supports are disjoint.
    """
    logpool = w @ np.log(np.maximum(B, params.epsilon_floor))
    if params.quantization_levels:
        table = _pl_table(lambda x: xlogy(x, x), 0.0, params.quantization_levels)

        def oracle(q):
            g, dg = _pl_eval(q, *table)
            return float(g.sum() - q @ logpool), dg - logpool
    else:
        def oracle(q):
            lq = np.log(q)
            return float(q @ lq - q @ logpool), lq + 1.0 - logpool
    return oracle


def _projected_gradient(oracle, n: int, params: SolverParams):
    """Spectral projected gradient on the floored simplex.

    Barzilai-Borwein step lengths with a nonmonotone Armijo backtrack; the
    first trial step is ``params.step_size``. Stops when the projected
    gradient step moves no coordinate by more than ``params.tol``.
    """
    eps = params.epsilon_floor
    if eps * n >= 1.0:
        raise InfeasibleFloor(f"epsilon_floor * |S| = {eps * n:g} >= 1")
    q = np.full(n, 1.0 / n)
    value, grad = oracle(q)
    best_q, best_val = q, value
    recent = [value]
    alpha = params.step_size
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        d = project_floored_simplex(q - alpha * grad, eps) - q
        if np.max(np.abs(d)) < params.tol:
            converged = True
            break
        slope = float(grad @ d)
        ref = max(recent)
        lam = 1.0
        while True:
            trial = q + lam * d
            t_val, t_grad = oracle(trial)
            if t_val <= ref + 1e-4 * lam * slope or lam < 1e-12:
                break
            lam *= 0.5
        s, y = trial - q, t_grad - grad
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else params.step_size
        alpha = min(max(alpha, 1e-12), 1e12)
        q, value, grad = trial, t_val, t_grad
        recent = (recent + [value])[-10:]
        if value < best_val:
            best_q, best_val = q, value
    return best_q, best_val, converged, it


def _numeric_merge(make_oracle, beliefs, weights, params) -> NumericMergeResult:
    params = params or SolverParams()
    B = _stack(beliefs)
    w = check_weights(weights, len(beliefs))
    n = B.shape[1]
    q, value, converged, iters = _projected_gradient(make_oracle(B, w, params), n, params)
    return NumericMergeResult(
        belief=Belief(beliefs[0].shape, q),
        converged=converged,
        iterations=iters,
        objective=value,
        floor_mass=floor_mass(n, params.epsilon_floor),
    )


def numeric_forward_kl_merge(beliefs, weights=None, params: Optional[SolverParams] = None) -> NumericMergeResult:
    """Forward KL merge by floored projected gradient descent.

    Returns the best iterate seen; ``converged`` is False when the iteration
    budget ran out before the step size fell below ``params.tol``.
    """
    return _numeric_merge(_forward_terms, beliefs, weights, params)


def numeric_reverse_kl_merge(beliefs, weights=None, params: Optional[SolverParams] = None) -> NumericMergeResult:
    return _numeric_merge(_reverse_terms, beliefs, weights, params)


# -- brute-force oracle ------------------------------------------------------

@lru_cache(maxsize=8)
def simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All points of the probability simplex in R^n with coordinates k/resolution."""
    if n == 1:
        return np.ones((1, 1))
    # stars and bars: choose n-1 cut positions among resolution + n - 1 slots
    cuts = np.array(list(itertools.combinations(range(resolution + n - 1), n - 1)))
    bounds = np.hstack([np.full((len(cuts), 1), -1), cuts, np.full((len(cuts), 1), resolution + n - 1)])
    grid = (np.diff(bounds, axis=1) - 1) / resolution
    grid.flags.writeable = False
    return grid


def _grid_objective(B, w, Q, objective: str) -> np.ndarray:
    if objective == "forward":
        m = w @ B
        const = float(np.sum(w @ xlogy(B, B)))
        with np.errstate(divide="ignore"):
            cross = np.where(m > 0, m * np.log(Q), 0.0)
        return const - cross.sum(axis=1)
    if objective == "reverse":
        with np.errstate(divide="ignore"):
            logB = np.log(B)
        total = xlogy(Q, Q).sum(axis=1)
        for wi, lb in zip(w, logB):
            if wi > 0:
                total = total - wi * np.where(Q > 0, Q * lb, 0.0).sum(axis=1)
        return total
    raise ValueError(f"objective must be 'forward' or 'reverse', got {objective!r}")


def brute_force_simplex_min(beliefs: Sequence[Belief], weights=None, objective: str = "forward",
                            resolution: int = 200) -> Belief:
    """Grid-scan the simplex and return the point with the smallest objective.

    Exponential in |S|; limited to four cells.
    """
    B = _stack(beliefs)
    w = check_weights(weights, len(beliefs))
    n = B.shape[1]
    if n > 4:
        raise TooLarge(f"brute force is limited to |S| <= 4, got {n}")
    Q = simplex_grid(n, resolution)
    with np.errstate(invalid="ignore"):
        vals = _grid_objective(B, w, Q, objective)
    vals = np.where(np.isnan(vals), np.inf, vals)
    return Belief(beliefs[0].shape, Q[int(np.argmin(vals))])


def merge_beliefs(strategy: MergeStrategy, beliefs: Sequence[Belief], visits=None,
                  params: Optional[SolverParams] = None) -> Belief:
    """Consensus belief under ``strategy`` with uniform scalar agent weights."""
    strategy = MergeStrategy(strategy)
    if strategy is MergeStrategy.ARITHMETIC:
        return arithmetic_merge(beliefs)
    if strategy is MergeStrategy.GEOMETRIC:
        return geometric_merge(beliefs)
    if strategy is MergeStrategy.VISIT_WEIGHTED:
        if visits is None:
            raise ValueError("visit-weighted merge needs visit counts")
        return visit_weighted_merge(beliefs, visits)
    if strategy is MergeStrategy.NUMERIC_FORWARD_KL:
        return numeric_forward_kl_merge(beliefs, params=params).belief
    return numeric_reverse_kl_merge(beliefs, params=params).belief
