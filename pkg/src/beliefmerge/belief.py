"""Grid beliefs, the binary-sensor Bayes filter, and information measures.

All logarithms are natural (nats).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

NORM_TOL = 1e-9
EQ_TOL = 1e-9


class ShapeMismatch(ValueError):
    """Two beliefs (or a belief and a count matrix) live on different grids."""


class ZeroEvidence(ArithmeticError):
    """An observation has zero probability under the prior."""


@dataclass(frozen=True)
class GridShape:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def size(self) -> int:
        return self.width * self.height

    def index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"({row}, {col}) outside {self.width}x{self.height} grid")
        return row * self.width + col

    def coords(self, cell: int) -> tuple[int, int]:
        if not 0 <= cell < self.size:
            raise IndexError(f"cell {cell} outside grid of {self.size} cells")
        return divmod(cell, self.width)

    def __str__(self):
        return f"{self.width}x{self.height}"

    @classmethod
    def parse(cls, text: str) -> "GridShape":
        w, _, h = text.lower().partition("x")
        return cls(int(w), int(h or w))


@dataclass(frozen=True)
class SensorModel:
    """Binary same-cell detector with false-positive rate ``alpha`` and
    false-negative rate ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True, eq=False)
class Belief:
    """Normalized probability mass over the cells of a grid.

    ``mass`` is stored as a read-only float64 vector in row-major cell order.
    """

    shape: GridShape
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.mass, dtype=float, copy=True).reshape(-1)
        if m.size != self.shape.size:
            raise ShapeMismatch(f"mass has {m.size} entries, grid has {self.shape.size}")
        if not np.all(np.isfinite(m)) or m.min() < 0.0:
            raise ValueError("belief entries must be finite and nonnegative")
        total = m.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"belief sums to {total!r}, expected 1")
        m.flags.writeable = False
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_weights(cls, shape: GridShape, weights) -> "Belief":
        """Normalize nonnegative weights into a belief."""
        w = np.asarray(weights, dtype=float).reshape(-1)
        total = w.sum()
        if not total > 0.0:
            raise ZeroEvidence("cannot normalize weights with zero total")
        return cls(shape, w / total)

    @property
    def size(self) -> int:
        return self.shape.size

    def __getitem__(self, cell):
        return self.mass[cell]

    def __len__(self):
        return self.mass.size

    def __eq__(self, other):
        if not isinstance(other, Belief):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.mass, other.mass)

    def isclose(self, other: "Belief", tol: float = EQ_TOL) -> bool:
        _check_same_shape(self, other)
        return bool(np.max(np.abs(self.mass - other.mass)) <= tol)

    def grid(self) -> np.ndarray:
        """Mass as a (height, width) array."""
        return self.mass.reshape(self.shape.height, self.shape.width)


def _check_same_shape(*beliefs: Belief) -> GridShape:
    shape = beliefs[0].shape
    for b in beliefs[1:]:
        if b.shape != shape:
            raise ShapeMismatch(f"belief shapes differ: {shape} vs {b.shape}")
    return shape


def uniform_belief(shape: GridShape) -> Belief:
    return Belief(shape, np.full(shape.size, 1.0 / shape.size))


def observation_likelihood(sensor: SensorModel, z: int, s: int, agent_cell: int) -> float:
    """P(z | target at s, agent at agent_cell)."""
    p_detect = 1.0 - sensor.beta if s == agent_cell else sensor.alpha
    return p_detect if z else 1.0 - p_detect


def likelihood_vector(sensor: SensorModel, z: int, agent_cell: int, size: int) -> np.ndarray:
    """``observation_likelihood`` evaluated for every target cell at once."""
    lik = np.full(size, sensor.alpha if z else 1.0 - sensor.alpha)
    lik[agent_cell] = 1.0 - sensor.beta if z else sensor.beta
    return lik


def bayes_update(prior: Belief, sensor: SensorModel, z: int, agent_cell: int) -> Belief:
    """Posterior after observing ``z`` from ``agent_cell``.

    Raises ZeroEvidence when the observation is impossible under the prior.
    """
    if not 0 <= agent_cell < prior.size:
        raise IndexError(f"agent cell {agent_cell} outside grid")
    post = prior.mass * likelihood_vector(sensor, z, agent_cell, prior.size)
    evidence = post.sum()
    if evidence <= 0.0:
        raise ZeroEvidence(f"z={z} at cell {agent_cell} has zero probability under the prior")
    return Belief(prior.shape, post / evidence)


def entropy(b: Belief) -> float:
    return float(-xlogy(b.mass, b.mass).sum())


def kl_divergence(p: Belief, q: Belief) -> float:
    """D(p || q); +inf when p puts mass where q has none."""
    _check_same_shape(p, q)
    support = p.mass > 0.0
    ps, qs = p.mass[support], q.mass[support]
    if np.any(qs == 0.0):
        return float("inf")
    return max(0.0, float(np.sum(ps * np.log(ps / qs))))
