"""Wendland kernels, kernel matrices and their Cholesky factors.

Only the smoothness-one Wendland function is implemented,

    phi(r) = (1 - r)^4 (4 r + 1) / 20   for 0 <= r < 1,   0 otherwise,

which is positive definite on R^n for n <= 3.  Distances are scaled by a
support radius ``sigma`` so that ``k(x, y) = phi(|x - y| / sigma)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpocon, dpotrf
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    DuplicatePointsError,
    FactorizationError,
)
from .sets import Box, ClusterSet

DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class WendlandKernel:
    dim: int = 2
    smoothness: int = 1
    support_radius: float = 1.0

    def __post_init__(self):
        if self.smoothness != 1:
            raise ConfigurationError(
                f"Wendland smoothness k={self.smoothness} is not supported (only k=1)"
            )
        if not 1 <= self.dim <= 3:
            raise ConfigurationError(
                f"phi_(n,1) is positive definite only for n <= 3, got n={self.dim}"
            )
        if not self.support_radius > 0:
            raise ConfigurationError("support radius must be positive")

    @property
    def peak(self) -> float:
        """Value at zero distance, ``phi(0) = 1/20``."""
        return 0.05

    def phi(self, r):
        """Vectorized radial profile; ``r`` is an unscaled distance."""
        s = np.asarray(r, dtype=float) / self.support_radius
        t = np.maximum(1.0 - s, 0.0)
        t2 = t * t
        return t2 * t2 * (0.2 * s + 0.05)

    def dphi(self, r):
        """Derivative of :meth:`phi` with respect to the unscaled distance."""
        s = np.asarray(r, dtype=float) / self.support_radius
        t = np.clip(1.0 - s, 0.0, None)
        return -s * t**3 / self.support_radius

    def __call__(self, x, y) -> float:
        return float(self.phi(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float))))

    def cross(self, a, b):
        """Matrix ``(k(a_i, b_j))`` for point arrays of shape (p, n) and (q, n)."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        return self.phi(cdist(a, b))

    def features(self, x, centers):
        """Feature vector ``(Phi_{c_1}(x), ..., Phi_{c_d}(x))``."""
        diff = np.asarray(x, dtype=float) - centers
        return self.phi(np.sqrt(np.einsum("ij,ij->i", diff, diff)))

    def radial(self, r):
        """``(phi(r), phi'(r) / r)``; the second factor is finite at ``r = 0``."""
        s = r / self.support_radius
        t = 1.0 - s
        np.maximum(t, 0.0, out=t)
        t2 = t * t
        k = t2 * t2 * (0.2 * s + 0.05)  # same arithmetic as phi
        return k, t2 * t * (-1.0 / self.support_radius**2)

    def features_and_gradient(self, x, centers):
        """Features and their gradients (shape (d, n)) with respect to ``x``.

        At ``x == c_i`` the radial chain rule is 0/0; the limit is the zero
        vector because ``phi'(0) = 0``.
        """
        diff = np.asarray(x, dtype=float) - centers
        s = np.sqrt(np.einsum("ij,ij->i", diff, diff)) / self.support_radius
        t = np.maximum(1.0 - s, 0.0)
        t2 = t * t
        t3 = t2 * t
        k = t2 * t2 * (0.2 * s + 0.05)  # same arithmetic as phi
        # phi'(r) / r = -(1 - s)^3 / sigma^2 stays finite at r = 0
        return k, (-t3 / self.support_radius**2)[:, None] * diff


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainError(f"distance must be nonnegative, got {r}")
    return r


def wendland_phi(r, kernel: WendlandKernel):
    r = _check_r(r)
    out = kernel.phi(r)
    return float(out) if out.ndim == 0 else out


def wendland_phi_deriv(r, kernel: WendlandKernel):
    r = _check_r(r)
    out = kernel.dphi(r)
    return float(out) if out.ndim == 0 else out


def check_distinct(points, tol=DUPLICATE_TOL):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        i, j = sorted(pairs[0])
        raise DuplicatePointsError(int(i), int(j), float(np.linalg.norm(points[i] - points[j])))


def kernel_matrix(points, kernel: WendlandKernel):
    points = points.points if isinstance(points, ClusterSet) else np.atleast_2d(points)
    check_distinct(points)
    K = kernel.cross(points, points)
    # cdist can leave round-off asymmetry; the kernel is symmetric by definition
    return 0.5 * (K + K.T)


@dataclass(frozen=True)
class KernelMatrixFactor:
    """Lower Cholesky factor of ``K + lam I``."""

    lower: np.ndarray
    lam: float
    log10_cond: float

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def solve(self, b):
        return cho_solve((self.lower, True), b, check_finite=False)

    def matrix(self):
        return self.lower @ self.lower.T

    def inverse_spectral_norm(self, tol=1e-8, max_iter=10_000):
        return inverse_spectral_norm(self, tol=tol, max_iter=max_iter)


def factorize(K, lam=0.0) -> KernelMatrixFactor:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {K.shape}")
    if lam < 0:
        raise DomainError("regularization parameter must be nonnegative")
    if not np.allclose(K, K.T, rtol=0, atol=1e-14 * max(1.0, np.abs(K).max())):
        raise ConfigurationError("kernel matrix is not symmetric")
    A = K + lam * np.eye(K.shape[0])
    L, info = dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(int(info), K.shape[0], lam)
    if info < 0:
        raise ConfigurationError(f"dpotrf: illegal argument {-info}")
    anorm = np.abs(A).sum(axis=0).max()
    rcond, _ = dpocon(L, anorm, uplo="L")
    log_cond = float(np.inf if rcond <= 0 else -np.log10(rcond))
    L.setflags(write=False)
    return KernelMatrixFactor(L, float(lam), log_cond)


def inverse_spectral_norm(factor: KernelMatrixFactor, tol=1e-8, max_iter=10_000) -> float:
    """``||(K + lam I)^{-1}||_2`` by inverse power iteration on the factor.

    The Rayleigh quotient of the inverse is tracked until its relative change
    falls below ``tol``.
    """
    d = factor.size
    v = np.ones(d) + 0.01 * np.random.default_rng(0).standard_normal(d)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = factor.solve(v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        v = w / nw
        if abs(new - est) <= tol * abs(new):
            # one more quotient from the normalized iterate
            return float(v @ factor.solve(v))
        est = new
    raise ConvergenceError(
        f"inverse power iteration did not reach relative tolerance {tol} "
        f"in {max_iter} iterations (estimate {est})",
        last_iterate=v,
    )


def fill_distance(clusters: ClusterSet, domain: Box, resolution=401) -> float:
    """Grid lower bound on ``sup_{x in domain} min_i |x - x_i|``.

    The supremum is taken over ``resolution**n`` probe points spanning the box
    (corners included), so the true fill distance is at least this value.
    """
    if len(clusters) == 0:
        raise ConfigurationError("empty cluster set")
    if resolution < 2:
        raise ConfigurationError("resolution must be at least 2 per axis")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(domain.lower, domain.upper)]
    probes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    return float(np.max(clusters.distance_to(probes)))
