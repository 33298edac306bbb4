"""Reference plants, Chebyshev cluster grids and cluster data generation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError, DatasetError
from .sets import Box, ClusterSet

DT = 0.05
NU = 0.1


def _fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ControlAffinePlant:
    """Discrete-time plant ``x+ = g0(x) + G(x) u``.

    ``drift_jacobian(x)`` returns the (n, n) Jacobian of ``g0``;
    ``input_jacobian(x)`` returns the (n, m, n) derivative of ``G``.  Missing
    Jacobians fall back to central differences.
    """

    n: int
    m: int
    drift: Callable
    input_map: Callable
    domain: Box
    control_box: Box
    drift_jacobian: Optional[Callable] = None
    input_jacobian: Optional[Callable] = None
    name: str = "plant"

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return self.drift(x) + self.input_map(x) @ u

    def linearize(self, x, u):
        """Return ``(F(x, u), dF/dx, dF/du)``."""
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        G = self.input_map(x)
        Jg = self.drift_jacobian(x) if self.drift_jacobian else _fd_jacobian(self.drift, x)
        dG = self.input_jacobian(x) if self.input_jacobian else _fd_jacobian(self.input_map, x)
        A = Jg + np.einsum("imk,m->ik", dG, u)
        return self.drift(x) + G @ u, A, G


def vdp_drift(x, dt=DT, nu=NU):
    # (1 - x1)^2 as written for this benchmark, not the textbook (1 - x1^2)
    x1, x2 = x
    return np.array([x1 + dt * x2, x2 + dt * (nu * (1.0 - x1) ** 2 * x2 - x1)])


def vdp_step(x, u, dt=DT, nu=NU):
    """One step of the discrete van der Pol oscillator."""
    u = float(np.asarray(u).reshape(-1)[0])
    return vdp_drift(np.asarray(x, dtype=float), dt, nu) + np.array([0.0, dt * u])


def van_der_pol(dt=DT, nu=NU, half_width=2.0, u_bound=2.0) -> ControlAffinePlant:
    G = np.array([[0.0], [dt]])
    G.setflags(write=False)
    dG = np.zeros((2, 1, 2))

    def jac(x):
        x1, x2 = x
        return np.array(
            [
                [1.0, dt],
                [dt * (-2.0 * nu * (1.0 - x1) * x2 - 1.0), 1.0 + dt * nu * (1.0 - x1) ** 2],
            ]
        )

    return ControlAffinePlant(
        n=2,
        m=1,
        drift=lambda x: vdp_drift(x, dt, nu),
        input_map=lambda x: G,
        domain=Box.symmetric(half_width, 2),
        control_box=Box.symmetric(u_bound, 1),
        drift_jacobian=jac,
        input_jacobian=lambda x: dG,
        name="van_der_pol",
    )


def chebyshev_nodes(root, half_width=2.0):
    i = np.arange(root)
    return half_width * np.cos(np.pi * (2 * i + 1) / (2 * root))


def chebyshev_grid(root: int, half_width=2.0, dim=2) -> ClusterSet:
    """Tensor grid of ``root`` Chebyshev nodes per axis with the origin first.

    Node indices run over ``0, ..., root - 1``; for odd ``root`` the middle
    index ``(root - 1) / 2`` is the zero node.
    """
    if root < 3 or root % 2 == 0:
        raise ConfigurationError(f"root must be odd and >= 3 (origin node), got {root}")
    nodes = chebyshev_nodes(root, half_width)
    nodes[(root - 1) // 2] = 0.0  # cos(pi/2) is 6e-17 in floating point
    pts = np.stack(np.meshgrid(*([nodes] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    origin = int(np.flatnonzero(np.all(pts == 0.0, axis=1))[0])
    order = [origin] + [i for i in range(len(pts)) if i != origin]
    return ClusterSet(pts[order], meta={"root": root, "half_width": half_width})


@dataclass(frozen=True)
class ClusterDataset:
    """Sample triplets ``(x_ij, u_ij, x_ij+)`` grouped by cluster.

    ``states[i]``, ``controls[i]`` and ``successors[i]`` have shapes
    ``(d_i, n)``, ``(d_i, m)`` and ``(d_i, n)``.
    """

    clusters: ClusterSet
    states: tuple
    controls: tuple
    successors: tuple
    eps_c: float
    m: int
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.clusters.dim

    @property
    def d(self) -> int:
        return len(self.clusters)

    @property
    def total(self) -> int:
        return sum(len(s) for s in self.states)

    def counts(self):
        return [len(s) for s in self.states]


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 441
    eps_c: float = 0.0
    samples_per_cluster: int = 25
    seed: int = 0
    support_radius: float = 1.0
    smoothness: int = 1
    lam: float = 0.0
    half_width: float = 2.0

    def __post_init__(self):
        root = math.isqrt(self.d)
        if root * root != self.d or root % 2 == 0:
            raise ConfigurationError(f"d={self.d} must be the square of an odd integer")
        if self.eps_c < 0:
            raise ConfigurationError("eps_c must be nonnegative")
        if self.lam < 0:
            raise ConfigurationError("lam must be nonnegative")

    @property
    def root(self) -> int:
        return math.isqrt(self.d)


def _ball_sample(rng, center, radius, domain, max_tries=10_000):
    for _ in range(max_tries):
        x = center + rng.uniform(-radius, radius, size=center.size)
        if np.linalg.norm(x - center) <= radius and domain.contains(x):
            return x
    raise DatasetError(f"could not sample the {radius}-ball around {center} inside the domain")


def generate_cluster_data(
    plant: ControlAffinePlant,
    clusters: ClusterSet,
    eps_c: float,
    samples_per_cluster: int,
    seed: int = 0,
    max_control_draws: int = 100,
) -> ClusterDataset:
    """Draw cluster-wise samples and step them through the plant.

    Cluster ``i`` uses its own PCG64 stream, child ``i`` of
    ``SeedSequence(seed)``, so each cluster's data is reproducible on its own.
    States are uniform in the ``eps_c`` ball intersected with the domain
    (rejection from the bounding cube); controls are uniform in the control
    box and redrawn until ``[1; u]`` has full row rank ``m + 1``.
    """
    m = plant.m
    if samples_per_cluster < m + 1:
        raise ConfigurationError(f"need at least m + 1 = {m + 1} samples per cluster")
    streams = np.random.SeedSequence(seed).spawn(len(clusters))
    states, controls, succ = [], [], []
    for i, (center, ss) in enumerate(zip(clusters.points, streams)):
        rng = np.random.Generator(np.random.PCG64(ss))
        if eps_c > 0:
            X = np.array([_ball_sample(rng, center, eps_c, plant.domain) for _ in range(samples_per_cluster)])
        else:
            X = np.repeat(center[None, :], samples_per_cluster, axis=0)
        for _ in range(max_control_draws):
            U = plant.control_box.uniform(rng, samples_per_cluster)
            # full row rank of [1; u] also implies rank(u) = m
            Ua = np.vstack([np.ones(samples_per_cluster), U.T])
            if np.linalg.matrix_rank(Ua, tol=1e-8 * np.linalg.norm(Ua, 2)) == m + 1:
                break
        else:
            raise DatasetError(f"cluster {i}: control rank condition unmet after {max_control_draws} draws")
        Xp = np.array([plant.step(x, u) for x, u in zip(X, U)])
        for arr in (X, U, Xp):
            arr.setflags(write=False)
        states.append(X)
        controls.append(U)
        succ.append(Xp)
    return ClusterDataset(clusters, tuple(states), tuple(controls), tuple(succ), float(eps_c), m, seed)
