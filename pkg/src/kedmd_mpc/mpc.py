"""Quadratic-cost MPC over a surrogate (or exact) control-affine model.

The finite-horizon problem is solved by single shooting: the controls are
the only decision variables, gradients come from an adjoint sweep through
the horizon, the control box is handled by projection and the (tightened)
state box by a quadratic penalty.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import ClosedLoopAborted, ConfigurationError, InfeasibleError, NumericalError
from .sets import Box


@dataclass(frozen=True)
class StageCost:
    """``l(x, u) = x^T Q x + u^T R u`` with symmetric positive definite Q, R."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ConfigurationError(f"{name} must be a symmetric square matrix")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ConfigurationError(f"{name} is not positive definite") from None
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def diagonal(cls, q, r):
        return cls(np.diag(np.atleast_1d(q)), np.diag(np.atleast_1d(r)))

    @property
    def eigenvalues(self):
        return np.concatenate([np.linalg.eigvalsh(self.Q), np.linalg.eigvalsh(self.R)])

    @property
    def lambda_max(self) -> float:
        """Largest eigenvalue over Q and R."""
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def lambda_min(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def __call__(self, x, u) -> float:
        return stage_cost(x, u, self)


def stage_cost(x, u, cost: StageCost) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (cost.Q.shape[0],) or u.shape != (cost.R.shape[0],):
        raise ConfigurationError(
            f"stage cost expects x in R^{cost.Q.shape[0]} and u in R^{cost.R.shape[0]}"
        )
    return float(x @ cost.Q @ x + u @ cost.R @ u)


def tightened_box(box: Box, k: int, eps: float) -> Box:
    """Pontryagin difference of ``box`` and the infinity-norm ball of radius ``k eps``."""
    if k < 1 or eps < 0:
        raise ConfigurationError("tightening needs k >= 1 and eps >= 0")
    lo = box.lower + k * eps
    hi = box.upper - k * eps
    if np.any(lo > hi):
        raise InfeasibleError(f"state constraints tightened by {k} * {eps} are empty at step k={k}")
    return Box(lo, hi)


@dataclass(frozen=True)
class OcpConfig:
    horizon: int
    control_box: Box
    state_box: Box
    eps: float = 0.0
    max_iter: int = 500
    tol: float = 1e-8
    armijo_c: float = 1e-4
    shrink: float = 0.5
    penalty_weight: float = 1e2
    penalty_growth: float = 10.0
    penalty_rounds: int = 5
    feas_tol: float = 1e-6

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.eps < 0:
            raise ConfigurationError("tightening eps must be nonnegative")
        if not self.control_box.contains_interior(np.zeros(self.control_box.dim)):
            raise ConfigurationError("0 must lie in the interior of the control box")
        if not self.state_box.contains_interior(np.zeros(self.state_box.dim)):
            raise ConfigurationError("0 must lie in the interior of the state box")
        # raises if some step's tightened box is empty
        self.tightened_bounds()

    def tightened_bounds(self):
        """Lower and upper bounds for ``x(1), ..., x(N)``, shape (N, n) each."""
        boxes = [tightened_box(self.state_box, k, self.eps) for k in range(1, self.horizon + 1)]
        return np.array([b.lower for b in boxes]), np.array([b.upper for b in boxes])

    def with_horizon(self, N) -> "OcpConfig":
        return replace(self, horizon=N)


@dataclass
class OcpSolution:
    controls: np.ndarray  # (N, m)
    value: float
    states: np.ndarray  # (N + 1, n)
    iterations: int
    converged: bool
    max_violation: float = 0.0
    penalty_rounds: int = 1


class _Problem:
    """Cost, penalty and adjoint gradient for one OCP instance."""

    def __init__(self, model, x0, cost: StageCost, cfg: OcpConfig):
        self.model = model
        self.x0 = np.asarray(x0, dtype=float)
        self.Q, self.R = cost.Q, cost.R
        self.N = cfg.horizon
        self.lo, self.hi = cfg.tightened_bounds()
        self.weight = 0.0
        self._last = None

    def violation(self, X):
        Y = X[1:]
        return np.maximum(Y - self.hi, 0.0) - np.maximum(self.lo - Y, 0.0)

    def cost(self, X, U):
        Xs = X[:-1]
        return float(np.einsum("ij,jk,ik->", Xs, self.Q, Xs) + np.einsum("ij,jk,ik->", U, self.R, U))

    def forward(self, U):
        """States and per-step Jacobians; the last pass is kept for the gradient."""
        if self._last is not None and self._last[0] is U:
            return self._last[1:]
        N = self.N
        X = np.empty((N + 1, self.x0.size))
        X[0] = self.x0
        A, B = [], []
        for i in range(N):
            X[i + 1], Ai, Bi = self.model.linearize(X[i], U[i])
            A.append(Ai)
            B.append(Bi)
        self._last = (U, X, A, B)
        return X, A, B

    def objective(self, U):
        X = self.forward(U)[0]
        J = self.cost(X, U)
        if self.weight:
            J += self.weight * float(np.sum(self.violation(X) ** 2))
        return J, X

    def value_and_grad(self, U):
        N = self.N
        X, A, B = self.forward(U)
        J = self.cost(X, U)
        dpen = np.zeros_like(X)
        if self.weight:
            v = self.violation(X)
            J += self.weight * float(np.sum(v**2))
            dpen[1:] = 2.0 * self.weight * v
        grad = np.empty_like(U)
        lam = dpen[N]
        for i in range(N - 1, -1, -1):
            grad[i] = 2.0 * self.R @ U[i] + B[i].T @ lam
            lam = 2.0 * self.Q @ X[i] + A[i].T @ lam + dpen[i]
        return J, grad, X


def _projected_gradient(prob: _Problem, U, project, cfg: OcpConfig, tol):
    """Projected gradient with Barzilai-Borwein trial steps and Armijo backtracking.

    Accepted steps satisfy ``J(u+) <= J(u) + c g^T (u+ - u)`` along the
    projection arc, so the objective never increases.
    """
    J, g, X = prob.value_and_grad(U)
    if not np.isfinite(J):
        raise NumericalError("non-finite cost at the initial control sequence")
    step = 1.0
    iters = 0
    converged = False
    for iters in range(cfg.max_iter + 1):
        pg = U - project(U - g)
        if np.max(np.abs(pg)) <= tol:
            converged = True
            break
        if iters == cfg.max_iter:
            break
        t = step
        while True:
            Un = project(U - t * g)
            Jn, Xn = prob.objective(Un)
            if np.isfinite(Jn) and Jn <= J + cfg.armijo_c * float(np.sum(g * (Un - U))):
                break
            t *= cfg.shrink
            if t < 1e-20:
                # Armijo fails at machine precision: treat as stationary
                return U, J, X, iters, True
        Jn, gn, Xn = prob.value_and_grad(Un)
        s = (Un - U).ravel()
        y = (gn - g).ravel()
        sy = float(s @ y)
        step = float(np.clip(s @ s / sy, 1e-12, 1e12)) if sy > 0 else min(10.0 * t, 1e12)
        U, J, g, X = Un, Jn, gn, Xn
    return U, J, X, iters, converged


def solve_ocp(model, x_hat, cost: StageCost, cfg: OcpConfig, warm_start=None) -> OcpSolution:
    """Minimize ``sum_{i<N} l(x(i), u(i))`` over ``u`` in the control box.

    ``model`` is anything with ``step(x, u)`` and ``linearize(x, u)``.  States
    ``x(1), ..., x(N)`` must lie in the tightened state boxes; violations are
    penalized with a weight growing by ``penalty_growth`` per round.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    m = cfg.control_box.dim
    N = cfg.horizon
    prob = _Problem(model, x_hat, cost, cfg)
    box_lo = np.broadcast_to(cfg.control_box.lower, (N, m))
    box_hi = np.broadcast_to(cfg.control_box.upper, (N, m))

    def project(U):
        return np.clip(U, box_lo, box_hi)

    zero = np.zeros((N, m))
    candidates = [zero]
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float).reshape(N, m)
        candidates.insert(0, project(ws))

    tol = cfg.tol
    total_iters = 0
    weight = 0.0
    for rnd in range(cfg.penalty_rounds):
        prob.weight = weight
        # start from whichever candidate is cheaper under the current weight
        U = min(candidates, key=lambda c: prob.objective(c)[0])
        U, J, X, iters, converged = _projected_gradient(prob, U, project, cfg, tol)
        total_iters += iters
        if not np.isfinite(J):
            raise NumericalError("non-finite cost during OCP solve")
        viol = float(np.max(np.abs(prob.violation(X)))) if N else 0.0
        if viol <= cfg.feas_tol:
            return OcpSolution(U, prob.cost(X, U), X, total_iters, converged, viol, rnd + 1)
        candidates = [U, zero]
        weight = cfg.penalty_weight if weight == 0.0 else weight * cfg.penalty_growth
    raise InfeasibleError(
        f"state constraints violated by {viol:.3e} after {cfg.penalty_rounds} penalty rounds"
    )


def ocp_objective(model, x_hat, U, cost: StageCost):
    """Unpenalized ``J_N(x_hat, U)``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    x = np.asarray(x_hat, dtype=float)
    J = 0.0
    for u in U:
        J += stage_cost(x, u, cost)
        x = model.step(x, u)
    return J


def ocp_gradient(model, x_hat, U, cost: StageCost, cfg: OcpConfig):
    """Adjoint gradient of the (penalty-free) objective; exposed for checks."""
    prob = _Problem(model, x_hat, cost, cfg)
    J, g, _ = prob.value_and_grad(np.asarray(U, dtype=float).reshape(cfg.horizon, -1))
    return J, g


@dataclass
class ClosedLoopTrace:
    states: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    stage_costs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    iterations: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.controls)

    def state_array(self):
        return np.array(self.states)

    def control_array(self):
        return np.array(self.controls)

    def norms(self):
        return np.linalg.norm(self.state_array(), axis=1)

    def replay(self, plant):
        """States regenerated from ``x(0)`` and the applied controls."""
        xs = [np.asarray(self.states[0])]
        for u in self.controls:
            xs.append(plant.step(xs[-1], u))
        return np.array(xs)


def mpc_closed_loop(plant, model, x0, steps: int, cost: StageCost, cfg: OcpConfig) -> ClosedLoopTrace:
    """Receding-horizon loop: optimize on ``model``, apply the first control to ``plant``."""
    x = np.asarray(x0, dtype=float)
    if not cfg.state_box.contains(x):
        raise ConfigurationError(f"initial state {x} outside the state constraints")
    m = cfg.control_box.dim
    trace = ClosedLoopTrace(states=[x.copy()])
    warm = None
    for k in range(steps):
        try:
            sol = solve_ocp(model, x, cost, cfg, warm_start=warm)
        except (InfeasibleError, NumericalError) as exc:
            raise ClosedLoopAborted(k, trace, exc) from exc
        u = sol.controls[0].copy()
        trace.controls.append(u)
        trace.stage_costs.append(stage_cost(x, u, cost))
        trace.values.append(sol.value)
        trace.iterations.append(sol.iterations)
        x = plant.step(x, u)
        trace.states.append(x.copy())
        warm = np.vstack([sol.controls[1:], np.zeros((1, m))])
    return trace


def relaxed_lyapunov_alpha(trace: ClosedLoopTrace, min_stage_cost=0.0) -> float:
    """``min_k (V(x(k)) - V(x(k+1))) / l(x(k), mu(k))`` over recorded steps.

    Steps with stage cost at or below ``min_stage_cost`` are skipped; there
    the ratio is dominated by solver tolerance rather than the dynamics.
    """
    V = np.asarray(trace.values)
    ell = np.asarray(trace.stage_costs)
    ratios = [
        (V[k] - V[k + 1]) / ell[k] for k in range(len(V) - 1) if ell[k] > min_stage_cost
    ]
    if not ratios:
        raise ConfigurationError("no steps above the stage-cost floor")
    return float(min(ratios))
