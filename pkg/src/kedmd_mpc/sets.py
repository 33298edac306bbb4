"""Axis-aligned boxes and cluster point sets."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ConfigurationError, InfeasibleError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower_1, upper_1] x ... x [lower_n, upper_n]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError(f"box bounds of shapes {lo.shape} and {hi.shape}")
        if np.any(lo > hi):
            raise ConfigurationError(f"empty box: lower {lo} exceeds upper {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, half_width, dim):
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (dim,))
        return cls(-hw, hw)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def contains_interior(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lower) and np.all(x < self.upper))

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def violation(self, x):
        """Componentwise distance of ``x`` (or rows of ``x``) outside the box."""
        x = np.asarray(x, dtype=float)
        return np.maximum(x - self.upper, 0.0) - np.maximum(self.lower - x, 0.0)

    def shrink(self, amount) -> "Box":
        lo = self.lower + amount
        hi = self.upper - amount
        if np.any(lo > hi):
            raise InfeasibleError(f"box {self} shrunk by {amount} is empty")
        return Box(lo, hi)

    def uniform(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True)
class ClusterSet:
    """The virtual observation points ``x_1, ..., x_d`` (rows of ``points``).

    For control surrogates the first point is expected to be the origin.
    """

    points: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float)).copy()
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigurationError("cluster set must be a non-empty (d, n) array")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def origin_first(self) -> bool:
        return bool(np.linalg.norm(self.points[0]) <= 1e-12)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def distance_to(self, x):
        """Euclidean distance from ``x`` (shape (n,) or (p, n)) to the set."""
        dist, _ = self.tree.query(np.asarray(x, dtype=float))
        return dist
