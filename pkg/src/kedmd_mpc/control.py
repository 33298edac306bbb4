"""Two-step kernel EDMD for control-affine systems.

Each cluster ``x_i`` first gets a local affine model ``H_i = [g0(x_i) | G(x_i)]``
from least squares over its samples.  Those estimates are then lifted with
the kernel exactly like the autonomous case, one Koopman matrix per column
``j`` of ``H``, and contracted against the coordinate observables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError, DatasetError
from .kernels import KernelMatrixFactor, WendlandKernel, factorize, fill_distance, kernel_matrix
from .sets import Box, ClusterSet
from .systems import ClusterDataset

RANK_RTOL = 1e-8
PINV_RTOL = 1e-10
RATIO_EXCLUSION = 1e-6


@dataclass
class ClusterCheck:
    index: int
    count: int
    max_offset: float
    contained: bool
    rank: int
    rank_ok: bool
    count_ok: bool

    @property
    def ok(self) -> bool:
        return self.contained and self.rank_ok and self.count_ok


@dataclass
class ValidationReport:
    clusters: list
    origin_first: bool
    eps_c: float

    @property
    def passed(self) -> bool:
        return self.origin_first and all(c.ok for c in self.clusters)

    def failures(self):
        out = []
        if not self.origin_first:
            out.append("first cluster point is not the origin")
        for c in self.clusters:
            if not c.contained:
                out.append(f"cluster {c.index}: sample at distance {c.max_offset:.3e} > eps_c={self.eps_c:.3e}")
            if not c.rank_ok:
                out.append(f"cluster {c.index}: control matrix has rank {c.rank}")
            if not c.count_ok:
                out.append(f"cluster {c.index}: only {c.count} samples")
        return out

    def __str__(self):
        if self.passed:
            return f"dataset valid ({len(self.clusters)} clusters)"
        return "dataset invalid:\n  " + "\n  ".join(self.failures())


def validate_dataset(data: ClusterDataset) -> ValidationReport:
    checks = []
    for i, (X, U) in enumerate(zip(data.states, data.controls)):
        offset = float(np.max(np.linalg.norm(X - data.clusters.points[i], axis=1))) if len(X) else 0.0
        # eps_c = 0 demands exact coincidence
        contained = offset <= data.eps_c * (1 + 1e-12) if data.eps_c > 0 else offset == 0.0
        if len(U):
            s = np.linalg.svd(np.atleast_2d(U).T, compute_uv=False)
            rank = int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0 else 0
        else:
            rank = 0
        checks.append(
            ClusterCheck(i, len(X), offset, contained, rank, rank == data.m, len(X) >= data.m + 1)
        )
    return ValidationReport(checks, data.clusters.origin_first, data.eps_c)


def local_regression(successors, controls, cluster=None):
    """Least-squares ``H_i`` with ``successors.T ~ H_i [1; controls.T]``.

    Returns ``(H_i, ||U_i^+||_2)``.  The pseudoinverse uses an SVD with
    singular values below ``1e-10 * s_max`` treated as zero; a rank-deficient
    ``U_i`` is an error.
    """
    Xp = np.atleast_2d(np.asarray(successors, dtype=float))
    Uc = np.asarray(controls, dtype=float).reshape(len(Xp), -1)
    U = np.vstack([np.ones(len(Xp)), Uc.T])
    W, s, Vt = np.linalg.svd(U, full_matrices=False)
    keep = s > PINV_RTOL * s[0]
    if keep.sum() < U.shape[0]:
        where = f"cluster {cluster}" if cluster is not None else "cluster"
        raise DatasetError(
            f"{where}: U_i = [1; u] has rank {int(keep.sum())} < {U.shape[0]}; "
            "need m + 1 affinely independent controls"
        )
    pinv = (Vt.T / s) @ W.T
    return Xp.T @ pinv, float(1.0 / s[-1])


@dataclass(frozen=True)
class ControlSurrogate:
    """Surrogate ``F_eps(x, u) = g0_eps(x) + G_eps(x) u``.

    ``coef[j]`` (shape (n, d)) has row ``l`` equal to ``(K_hat_j (x_l)_X)^T``;
    ``j = 0`` is the drift and ``j >= 1`` the input columns.
    """

    kernel: WendlandKernel
    clusters: ClusterSet
    coef: np.ndarray
    H: np.ndarray
    lam: float = 0.0
    pinv_norms: Optional[np.ndarray] = None
    factor: Optional[KernelMatrixFactor] = field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.coef.shape[1]

    @property
    def m(self) -> int:
        return self.coef.shape[0] - 1

    @property
    def d(self) -> int:
        return self.coef.shape[2]

    def _control(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.m,):
            raise ConfigurationError(f"control of shape {u.shape}, expected ({self.m},)")
        return u

    def _state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ConfigurationError(f"state of dimension {x.shape[-1]}, expected {self.n}")
        return x

    def _combine(self, stacked, u):
        """``part_0 + sum_j u_j part_j`` for ``stacked`` of shape ((m + 1) n, ...)."""
        parts = stacked.reshape((self.m + 1, self.n) + stacked.shape[1:])
        return parts[0] + np.tensordot(u, parts[1:], axes=1) if self.m > 1 else parts[0] + u[0] * parts[1]

    # evaluation caches: centers as contiguous (n, d) and coef as ((m + 1) n, d)
    @cached_property
    def _centers_t(self):
        return np.ascontiguousarray(self.clusters.points.T)

    @cached_property
    def _flat(self):
        return self.coef.reshape(-1, self.d)

    def _features(self, x):
        diff = x[:, None] - self._centers_t
        return diff, np.sqrt(np.einsum("ij,ij->j", diff, diff))

    def step(self, x, u):
        return eval_surrogate(self, x, u)

    def drift(self, x):
        return self.coef[0] @ self.kernel.phi(self._features(self._state(x))[1])

    def input_map(self, x):
        k = self.kernel.phi(self._features(self._state(x))[1])
        return (self.coef[1:] @ k).T

    def linearize(self, x, u):
        """Return ``(F_eps(x, u), dF_eps/dx, G_eps(x))`` from one feature pass."""
        x = self._state(x)
        u = self._control(u)
        diff, r = self._features(x)
        k, w = self.kernel.radial(r)
        Ck = self._flat @ k
        dCk = self._flat @ (diff * w).T
        return self._combine(Ck, u), self._combine(dCk, u), Ck[self.n:].reshape(self.m, self.n).T


def fit_control_surrogate(data: ClusterDataset, kernel: WendlandKernel, lam=0.0) -> ControlSurrogate:
    report = validate_dataset(data)
    if not report.passed:
        raise DatasetError(str(report))
    X = data.clusters.points
    H, norms = [], []
    for i, (Xp, U) in enumerate(zip(data.successors, data.controls)):
        Hi, ni = local_regression(Xp, U, cluster=i)
        H.append(Hi)
        norms.append(ni)
    H = np.array(H)  # (d, n, m + 1)
    factor = factorize(kernel_matrix(X, kernel), lam)
    alpha = factor.solve(X)  # interpolation coefficients of the coordinate maps
    coef = np.empty((data.m + 1, data.n, len(X)))
    for j in range(data.m + 1):
        # row l: features of g_j(x_l), the j-th column of H_l
        M = kernel.cross(H[:, :, j], X)
        coef[j] = factor.solve(M @ alpha).T
    coef.setflags(write=False)
    H.setflags(write=False)
    norms = np.array(norms)
    norms.setflags(write=False)
    return ControlSurrogate(kernel, data.clusters, coef, H, float(lam), norms, factor)


def koopman_matrices(model: ControlSurrogate):
    """The d x d matrices ``K_hat_j = K^-1 M_j K^-1``, shape (m + 1, d, d).

    Only the contracted blocks ``coef`` are needed for evaluation; this is
    for inspection and checks.
    """
    factor = model.factor or factorize(kernel_matrix(model.clusters.points, model.kernel), model.lam)
    X = model.clusters.points
    out = np.empty((model.m + 1, model.d, model.d))
    for j in range(model.m + 1):
        M = model.kernel.cross(model.H[:, :, j], X)
        out[j] = factor.solve(factor.solve(M).T).T
    return out


def eval_surrogate(model: ControlSurrogate, x, u):
    """Evaluate ``F_eps``; accepts a single pair or stacked rows of ``x`` and ``u``."""
    x = model._state(x)
    if x.ndim == 1:
        k = model.kernel.phi(model._features(x)[1])
        return model._combine(model._flat @ k, model._control(u))
    u = np.asarray(u, dtype=float).reshape(len(x), model.m)
    K = model.kernel.cross(x, model.clusters.points)  # (p, d)
    parts = np.einsum("jnd,pd->pjn", model.coef, K)
    return parts[:, 0] + np.einsum("pjn,pj->pn", parts[:, 1:], u)


def surrogate_jacobian_x(model: ControlSurrogate, x, u):
    return model.linearize(x, u)[1]


@dataclass
class QuadraticMax:
    value: float
    vector: np.ndarray
    bound_type: str  # "exact" or "lower"


def max_quadratic_on_cube(solve: Callable, d: int, exact_limit=12, n_random=1000, seed=0) -> QuadraticMax:
    """``max_{|v|_inf <= 1} v^T A^{-1} v`` with ``solve(v) = A^{-1} v``.

    A convex function attains its maximum over the cube at a vertex, so up to
    ``exact_limit`` dimensions all sign vectors are enumerated.  Beyond that
    the value is a lower bound from random sign vectors refined by single
    sign flips.
    """
    if d <= exact_limit:
        # v and -v give the same value; fix the first sign
        signs = np.array([(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=d - 1)])
        vals = np.einsum("ij,ji->i", signs, solve(signs.T))
        best = int(np.argmax(vals))
        return QuadraticMax(float(vals[best]), signs[best], "exact")
    rng = np.random.default_rng(seed)
    Ainv_diag = None
    best_val, best_v = -np.inf, None
    candidates = rng.choice((-1.0, 1.0), size=(n_random, d))
    vals = np.einsum("ij,ji->i", candidates, solve(candidates.T))
    order = np.argsort(vals)[::-1][:5]
    for idx in order:
        v = candidates[idx].copy()
        w = solve(v)
        if Ainv_diag is None:
            Ainv_diag = np.diag(solve(np.eye(d)))
        val = float(v @ w)
        for _ in range(100):
            # flipping v_i changes the value by 4 (A^-1_ii - v_i w_i)
            gain = 4.0 * (Ainv_diag - v * w)
            i = int(np.argmax(gain))
            if gain[i] <= 1e-12 * abs(val):
                break
            v[i] = -v[i]
            w = solve(v)
            val = float(v @ w)
        if val > best_val:
            best_val, best_v = val, v
    return QuadraticMax(best_val, best_v, "lower")


@dataclass
class ErrorConstants:
    fill_distance: float
    inverse_norm: float
    max_pinv_norm: float
    c: float
    eps_c: float
    eps_h: float
    quad_max: float
    bound_type: str
    log10_cond: float

    def as_dict(self):
        return dict(self.__dict__)


def error_constants(model: ControlSurrogate, data: Optional[ClusterDataset], domain: Box, resolution=401) -> ErrorConstants:
    """Computable factors of the approximation error bound.

    ``c = max_i ||U_i^+|| * phi(0)^(1/2) * (max_{|v|_inf <= 1} v^T K^-1 v)^(1/2)``
    with ``K`` replaced by ``K + lam I`` when regularized.  ``data`` may be
    omitted for a loaded model that carries its pseudoinverse norms; ``eps_c``
    is then reported as NaN.
    """
    if data is None and model.pinv_norms is None:
        raise ConfigurationError("pseudoinverse norms need either the dataset or a model that stores them")
    factor = model.factor or factorize(kernel_matrix(model.clusters.points, model.kernel), model.lam)
    h = fill_distance(model.clusters, domain, resolution)
    inv_norm = factor.inverse_spectral_norm()
    if model.pinv_norms is not None:
        max_pinv = float(np.max(model.pinv_norms))
    else:
        max_pinv = max(local_regression(Xp, U)[1] for Xp, U in zip(data.successors, data.controls))
    qm = max_quadratic_on_cube(factor.solve, len(model.clusters))
    c = max_pinv * np.sqrt(model.kernel.peak) * np.sqrt(qm.value)
    k = model.kernel.smoothness
    return ErrorConstants(
        fill_distance=h,
        inverse_norm=inv_norm,
        max_pinv_norm=max_pinv,
        c=float(c),
        eps_c=data.eps_c if data is not None else float("nan"),
        eps_h=float(h ** (k - 0.5)),
        quad_max=qm.value,
        bound_type=qm.bound_type,
        log10_cond=factor.log10_cond,
    )


@dataclass
class SupError:
    sup_error: float
    sup_ratio: float
    n_points: int
    n_ratio_points: int


def empirical_sup_error(model: ControlSurrogate, truth: Callable, xs, us) -> SupError:
    """Uniform error ``max ||F - F_eps||_inf`` and ``max error / dist(x, X)``.

    Points closer than ``1e-6`` to a cluster point are left out of the ratio.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if len(xs) == 0:
        raise ConfigurationError("empty test set")
    us = np.asarray(us, dtype=float).reshape(len(xs), -1)
    approx = eval_surrogate(model, xs, us)
    exact = np.array([truth(x, u) for x, u in zip(xs, us)])
    err = np.max(np.abs(exact - approx), axis=1)
    dist = model.clusters.distance_to(xs)
    mask = dist >= RATIO_EXCLUSION
    ratio = float(np.max(err[mask] / dist[mask])) if mask.any() else 0.0
    return SupError(float(err.max()), ratio, len(xs), int(mask.sum()))
