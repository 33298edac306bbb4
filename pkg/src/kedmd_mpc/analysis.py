"""Stability constants and empirical diagnostics for kEDMD-MPC."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import empirical_sup_error, fit_control_surrogate
from .exceptions import ConfigurationError, InfeasibleError, NumericalError
from .kernels import WendlandKernel, fill_distance
from .mpc import OcpConfig, StageCost, solve_ocp
from .sets import Box
from .systems import chebyshev_grid, generate_cluster_data


def ell_star(x, cost: StageCost) -> float:
    """``inf_u l(x, u)``; attained at ``u = 0`` because R is positive definite."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(x @ cost.Q @ x)


@dataclass
class GrowthBoundSequence:
    """Estimated constants ``B_1, ..., B_Nmax`` with ``V_k(x) <= B_k l*(x)``.

    ``values[k - 1]`` is ``B_k``; :meth:`B` also accepts ``k = 0`` (``B_0 = 1``).
    """

    values: np.ndarray
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    argmax: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    raw: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @classmethod
    def from_values(cls, values):
        return cls(np.asarray(values, dtype=float))

    def __len__(self):
        return len(self.values)

    def B(self, k: int) -> float:
        if k == 0:
            return 1.0
        if not 1 <= k <= len(self.values):
            raise ConfigurationError(f"B_{k} not available (sequence has {len(self.values)} entries)")
        return float(self.values[k - 1])


def _as_sequence(B) -> GrowthBoundSequence:
    return B if isinstance(B, GrowthBoundSequence) else GrowthBoundSequence.from_values(B)


def estimate_growth_bounds(model, cost: StageCost, cfg: OcpConfig, initial_states, n_max: int) -> GrowthBoundSequence:
    """``B_k = max_x V_k(x) / l*(x)`` over the sample states, for ``k = 1..n_max``.

    A running maximum enforces monotonicity (``V_k`` is nondecreasing in
    ``k``; decreases can only come from solver tolerance).  Samples whose
    OCP is infeasible are dropped with a warning.
    """
    xs = np.atleast_2d(np.asarray(initial_states, dtype=float))
    ls = np.array([ell_star(x, cost) for x in xs])
    if np.any(ls <= 0):
        raise ConfigurationError("growth bounds need l*(x) > 0; remove the origin from the samples")
    ratios = np.full((n_max, len(xs)), np.nan)
    alive = np.ones(len(xs), dtype=bool)
    warm = [None] * len(xs)
    m = cfg.control_box.dim
    for k in range(1, n_max + 1):
        ck = cfg.with_horizon(k)
        for s, x in enumerate(xs):
            if not alive[s]:
                continue
            try:
                sol = solve_ocp(model, x, cost, ck, warm_start=warm[s])
            except (InfeasibleError, NumericalError) as exc:
                warnings.warn(f"dropping sample {x}: {exc}", stacklevel=2)
                alive[s] = False
                continue
            ratios[k - 1, s] = sol.value / ls[s]
            warm[s] = np.vstack([sol.controls, np.zeros((1, m))])
    if not alive.any():
        raise InfeasibleError("every growth-bound sample was infeasible")
    kept = ratios[:, alive]
    best = np.argmax(kept, axis=1)
    values = np.maximum.accumulate(kept.max(axis=1))
    return GrowthBoundSequence(values, xs[alive], xs[alive][best], kept)


def compute_alpha(B, N: int) -> float:
    """Suboptimality index ``alpha_N`` from the growth constants ``B_2..B_N``.

    ``alpha_N = 1 - (B_2 - 1)(B_N - 1) P / (prod_{i=2}^N B_i - (B_2 - 1) P)``
    with ``P = prod_{i=3}^N (B_i - 1)`` (empty products are 1).
    """
    seq = _as_sequence(B)
    if N < 2:
        raise ConfigurationError("alpha_N needs N >= 2")
    b = [seq.B(i) for i in range(2, N + 1)]
    if min(b) < 1:
        raise ConfigurationError("growth constants must be >= 1")
    P = math.prod(bi - 1.0 for bi in b[1:])
    num = (b[0] - 1.0) * (b[-1] - 1.0) * P
    den = math.prod(b) - (b[0] - 1.0) * P
    if den == 0:
        raise NumericalError("degenerate growth sequence: zero denominator in alpha_N")
    return 1.0 - num / den


def minimal_stabilizing_horizon(B, n_max: Optional[int] = None) -> Optional[int]:
    seq = _as_sequence(B)
    n_max = n_max or len(seq)
    for N in range(2, n_max + 1):
        if compute_alpha(seq, N) > 0:
            return N
    return None


def compute_B_eps(B, N: int, L_F: float, C: float, eps_h: float, lam_max: float, lam_min: float) -> float:
    """Growth constant of the surrogate from that of the true system.

    ``B_N + c1 C eps_h lam_max/lam_min + c2 C^2 eps_h^2 lam_max/lam_min`` with
    ``d = 2 (L_F + C eps_h)^2``,
    ``c1 = sum_{k<N} B_k (sum_{i<=k} d^i)(sum_{i<=N-1-k} d^i)`` and
    ``c2 = sum_{k<=N-2} B_k sum_{i<=N-2-k} d^i``, where ``B_0 = 1``.
    """
    seq = _as_sequence(B)
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    if lam_max <= 0 or lam_min <= 0:
        raise ConfigurationError("eigenvalue bounds must be positive")
    d = 2.0 * (L_F + C * eps_h) ** 2

    def geo(p):
        return sum(d**i for i in range(p + 1))

    c1 = sum(seq.B(k) * geo(k) * geo(N - 1 - k) for k in range(N))
    c2 = sum(seq.B(k) * geo(N - 2 - k) for k in range(N - 1))
    ratio = lam_max / lam_min
    return seq.B(N) + c1 * C * eps_h * ratio + c2 * C**2 * eps_h**2 * ratio


def plant_lipschitz(plant, domain: Box, control_box: Box, resolution=41) -> float:
    """Max spectral norm of ``dF/dx`` over a grid of ``domain x control box`` corners.

    For plants whose Jacobian is affine in ``u`` the control extremes suffice.
    """
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(domain.lower, domain.upper)]
    xs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    us = np.stack(np.meshgrid(*zip(control_box.lower, control_box.upper), indexing="ij"), -1).reshape(-1, control_box.dim)
    return max(np.linalg.norm(plant.linearize(x, u)[1], 2) for x in xs for u in us)


def estimate_modulus(model, domain: Box, control_box: Box, sample_pairs=1000, seed=0) -> float:
    """Empirical Lipschitz constant of ``F_eps`` in ``x``, uniformly in ``u``.

    Larger of the maximal difference quotient over random pairs and the
    maximal Jacobian spectral norm over random points.  A diagnostic, not a
    certificate.
    """
    if sample_pairs < 1:
        raise ConfigurationError("sample_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    xs = domain.uniform(rng, sample_pairs)
    ys = domain.uniform(rng, sample_pairs)
    us = control_box.uniform(rng, sample_pairs)
    quot = 0.0
    jac = 0.0
    for x, y, u in zip(xs, ys, us):
        dist = np.linalg.norm(x - y)
        if dist > 0:
            quot = max(quot, np.linalg.norm(model.step(x, u) - model.step(y, u)) / dist)
        jac = max(jac, np.linalg.norm(model.linearize(x, u)[1], 2))
    return float(max(quot, jac))


@dataclass
class ConvergenceStudy:
    d: list
    fill_distance: list
    sup_error: list
    sup_ratio: list
    slope: float
    residual: float

    def rows(self):
        return list(zip(self.d, self.fill_distance, self.sup_error, self.sup_ratio))


def default_test_set(domain: Box, control_box: Box, per_axis=100, seed=12345):
    """Fixed ``per_axis**n`` state grid with seeded uniform controls."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(domain.lower, domain.upper)]
    xs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    us = control_box.uniform(np.random.default_rng(seed), len(xs))
    return xs, us


def convergence_study(
    plant,
    d_list: Sequence[int],
    test_points=None,
    eps_c=0.0,
    samples_per_cluster=25,
    seed=0,
    kernel: Optional[WendlandKernel] = None,
    lam=0.0,
    fill_resolution=401,
) -> ConvergenceStudy:
    """Refit the surrogate on Chebyshev grids of increasing size.

    The slope is the least-squares fit of ``log(error)`` against
    ``log(h_X)``; no particular value is implied by the theory at this scale.
    """
    if list(d_list) != sorted(d_list):
        raise ConfigurationError("d_list must be ascending")
    kernel = kernel or WendlandKernel(dim=plant.n)
    if test_points is None:
        test_points = default_test_set(plant.domain, plant.control_box)
    xs, us = test_points
    hs, errs, ratios = [], [], []
    half_width = float(plant.domain.upper[0])
    for d in d_list:
        root = math.isqrt(d)
        if root * root != d:
            raise ConfigurationError(f"d={d} is not a perfect square")
        clusters = chebyshev_grid(root, half_width, plant.n)
        data = generate_cluster_data(plant, clusters, eps_c, samples_per_cluster, seed)
        model = fit_control_surrogate(data, kernel, lam)
        err = empirical_sup_error(model, plant.step, xs, us)
        hs.append(fill_distance(clusters, plant.domain, fill_resolution))
        errs.append(err.sup_error)
        ratios.append(err.sup_ratio)
    if len(d_list) >= 2:
        A = np.vstack([np.log(hs), np.ones(len(hs))]).T
        coef, res, *_ = np.linalg.lstsq(A, np.log(errs), rcond=None)
        slope = float(coef[0])
        residual = float(np.sqrt(res[0])) if len(res) else 0.0
    else:
        slope, residual = float("nan"), float("nan")
    return ConvergenceStudy(list(d_list), hs, errs, ratios, slope, residual)

