"""Run configuration and the grid -> data -> fit -> closed loop pipeline."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .control import ControlSurrogate, fit_control_surrogate
from .exceptions import ConfigurationError
from .kernels import WendlandKernel
from .mpc import ClosedLoopTrace, OcpConfig, StageCost, mpc_closed_loop
from .sets import Box
from .systems import ExperimentConfig, chebyshev_grid, generate_cluster_data, van_der_pol

PLATEAU_WINDOW = 100
PLATEAU_FACTOR = 3.0


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs.  Defaults reproduce the van der Pol setup.

    ``eps_c`` is a number or the literal ``sqrt2/d``.  Vector entries
    (``q``, ``x0``) are comma separated.
    """

    # data and surrogate
    d: int = 441
    eps_c: str = "0"
    samples_per_cluster: int = 25
    seed: int = 0
    support_radius: float = 1.0
    smoothness: int = 1
    lam: float = 0.0
    half_width: float = 2.0
    # plant
    dt: float = 0.05
    nu: float = 0.1
    u_bound: float = 2.0
    # MPC
    horizon: int = 10
    steps: int = 1000
    x0: tuple = (0.5, 0.5)
    q: tuple = (1.0, 1.0)
    r: float = 1e-4
    state_bound: float = 2.0
    tighten_eps: float = 0.0
    max_iter: int = 500
    tol: float = 1e-8
    exact_plant: bool = False
    # analysis
    growth_grid: int = 5
    growth_half_width: float = 1.0
    n_max: int = 20
    modulus_pairs: int = 1000
    convergence_d: tuple = (121, 225, 441)
    test_per_axis: int = 100
    fill_resolution: int = 401
    # output
    out: str = "out"
    plot: bool = True
    workers: int = 0

    def __post_init__(self):
        self.experiment  # validates d, eps_c, lam
        if self.horizon < 1 or self.steps < 0:
            raise ConfigurationError("horizon must be >= 1 and steps >= 0")
        if len(self.x0) != 2 or len(self.q) != 2:
            raise ConfigurationError("x0 and q need two entries for the van der Pol plant")
        if self.r <= 0 or min(self.q) <= 0:
            raise ConfigurationError("q and r must be positive")
        if self.n_max < 2:
            raise ConfigurationError("n_max must be at least 2")

    @property
    def eps_c_value(self) -> float:
        return parse_eps_c(self.eps_c, self.d)

    @property
    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            d=self.d,
            eps_c=self.eps_c_value,
            samples_per_cluster=self.samples_per_cluster,
            seed=self.seed,
            support_radius=self.support_radius,
            smoothness=self.smoothness,
            lam=self.lam,
            half_width=self.half_width,
        )

    def plant(self):
        return van_der_pol(self.dt, self.nu, self.half_width, self.u_bound)

    def cost(self) -> StageCost:
        return StageCost.diagonal(self.q, [self.r])

    def ocp(self, horizon: Optional[int] = None) -> OcpConfig:
        return OcpConfig(
            horizon=horizon or self.horizon,
            control_box=Box.symmetric(self.u_bound, 1),
            state_box=Box.symmetric(self.state_bound, 2),
            eps=self.tighten_eps,
            max_iter=self.max_iter,
            tol=self.tol,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def parse_eps_c(text, d: int) -> float:
    s = str(text).strip().replace(" ", "")
    if s.lower() in ("sqrt2/d", "sqrt(2)/d"):
        return math.sqrt(2.0) / d
    try:
        v = float(s)
    except ValueError:
        raise ConfigurationError(f"eps_c: cannot parse {text!r} (number or 'sqrt2/d')") from None
    if v < 0:
        raise ConfigurationError("eps_c must be nonnegative")
    return v


def _convert(name, typ, raw: str):
    raw = raw.strip()
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "tuple":
            items = [v for v in raw.replace("(", "").replace(")", "").split(",") if v.strip()]
            return tuple(int(v) if name == "convergence_d" else float(v) for v in items)
        return raw
    except ValueError:
        raise ConfigurationError(f"{name}: cannot parse value {raw!r} as {typ}") from None


def parse_config_text(text: str, **overrides) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in types:
            raise ConfigurationError(f"unknown config key '{key}' (line {lineno})")
        values[key] = _convert(key, types[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path=None, **overrides) -> RunConfig:
    if path is None:
        return parse_config_text("", **overrides)
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), **overrides)


def fit_from_config(cfg: RunConfig):
    """Grid, cluster data and surrogate for ``cfg``; returns ``(plant, data, model)``."""
    exp = cfg.experiment
    plant = cfg.plant()
    clusters = chebyshev_grid(exp.root, exp.half_width, plant.n)
    data = generate_cluster_data(plant, clusters, exp.eps_c, exp.samples_per_cluster, exp.seed)
    kernel = WendlandKernel(plant.n, exp.smoothness, exp.support_radius)
    model = fit_control_surrogate(data, kernel, exp.lam)
    return plant, data, model


def run_closed_loop(cfg: RunConfig, model: Optional[ControlSurrogate] = None) -> ClosedLoopTrace:
    """Closed loop on the plant; the OCP uses ``model`` or the plant itself."""
    plant = cfg.plant()
    if cfg.exact_plant:
        model = plant
    elif model is None:
        _, _, model = fit_from_config(cfg)
    return mpc_closed_loop(plant, model, np.array(cfg.x0), cfg.steps, cfg.cost(), cfg.ocp())


def _slope(k, y):
    if len(k) < 2:
        return float("nan")
    A = np.vstack([k, np.ones(len(k))]).T
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])


@dataclass
class TraceSummary:
    """Statistics of ``||x(k)||`` that make the figure claims checkable.

    ``plateau`` is the median over the last ``window`` norms.  ``decay_slope``
    is the least-squares slope of ``ln ||x(k)||`` over the steps with
    ``||x(k)|| > 3 plateau``.  ``flatness`` is the relative change of the
    least-squares line of ``ln ||x(k)||`` across the last ``window`` steps,
    ``exp(window * slope) - 1``; a plateau has ``|flatness| <= 0.1``.
    """

    steps: int
    initial_norm: float
    final_norm: float
    plateau: float
    decay_slope: float
    tail_slope: float
    flatness: float
    mean_iterations: float

    def as_dict(self):
        return dataclasses.asdict(self)


def summarize_norms(norms, iterations=(), window=PLATEAU_WINDOW) -> TraceSummary:
    norms = np.asarray(norms, dtype=float)
    if len(norms) < 2:
        raise ConfigurationError("need at least two states to summarize")
    window = min(window, len(norms))
    tail = norms[-window:]
    plateau = float(np.median(tail))
    k = np.arange(len(norms), dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(norms)
    pre = (norms > PLATEAU_FACTOR * plateau) & np.isfinite(logs)
    decay = _slope(k[pre], logs[pre])
    tk = k[-window:]
    ok = np.isfinite(logs[-window:])
    tail_slope = _slope(tk[ok], logs[-window:][ok])
    flat = float(np.expm1(window * tail_slope)) if np.isfinite(tail_slope) else float("nan")
    its = float(np.mean(iterations)) if len(iterations) else float("nan")
    return TraceSummary(len(norms) - 1, float(norms[0]), float(norms[-1]), plateau, decay, tail_slope, flat, its)


def summarize_trace(trace: ClosedLoopTrace, window=PLATEAU_WINDOW) -> TraceSummary:
    return summarize_norms(trace.norms(), trace.iterations, window)


@dataclass(frozen=True)
class Scenario:
    name: str
    label: str
    config: RunConfig


FIGURES = ("fig1", "fig2")


def figure_scenarios(figure: str, base: RunConfig):
    """Closed-loop runs behind each figure.

    fig1: d in {441, 1681} x eps_c in {0, sqrt2/d} at the base horizon.
    fig2: d = 441 at N = 20 with both eps_c values.
    """
    if figure == "fig1":
        combos = [(441, "0", base.horizon), (441, "sqrt2/d", base.horizon),
                  (1681, "0", base.horizon), (1681, "sqrt2/d", base.horizon)]
    elif figure == "fig2":
        combos = [(441, "0", 20), (441, "sqrt2/d", 20)]
    else:
        raise ConfigurationError(f"unknown figure '{figure}' (choose from {', '.join(FIGURES)})")
    out = []
    for d, eps, N in combos:
        tag = "0" if eps == "0" else "sqrt2_d"
        eps_label = "0" if eps == "0" else "sqrt(2)/d"
        out.append(Scenario(f"d{d}_eps{tag}_N{N}", f"d={d}, eps_c={eps_label}, N={N}",
                            base.replace(d=d, eps_c=eps, horizon=N, exact_plant=False)))
    return out


def run_scenario(scenario: Scenario):
    """Fit and run one scenario; returns ``(scenario, trace)``.  Top level for pickling."""
    _, _, model = fit_from_config(scenario.config)
    return scenario, run_closed_loop(scenario.config, model)
