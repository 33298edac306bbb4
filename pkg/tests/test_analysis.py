import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kedmd_mpc import (
    Box,
    ConfigurationError,
    GrowthBoundSequence,
    InfeasibleError,
    OcpConfig,
    StageCost,
    compute_alpha,
    compute_B_eps,
    convergence_study,
    ell_star,
    estimate_growth_bounds,
    estimate_modulus,
    minimal_stabilizing_horizon,
)
from kedmd_mpc.analysis import default_test_set, plant_lipschitz
from kedmd_mpc.control import ControlSurrogate
from kedmd_mpc.systems import ControlAffinePlant

COST = StageCost.diagonal([1.0, 1.0], [1e-4])
OCP = OcpConfig(1, Box.symmetric(2.0, 1), Box.symmetric(2.0, 2))


def test_ell_star_oracles(rng):
    assert ell_star(np.zeros(2), COST) == 0.0
    assert ell_star(np.array([0.5, 0.5]), COST) == pytest.approx(0.5, rel=1e-12)
    x = rng.uniform(-2, 2, 2)
    for u in rng.uniform(-2, 2, 100):
        assert ell_star(x, COST) <= COST(x, u)


@pytest.mark.parametrize(
    "B, N, expected",
    [([1.0, 1.0], 2, 1.0), ([1.0, 1.5], 2, 0.75), ([1.0, 2.0, 2.0], 3, 2.0 / 3.0)],
)
def test_alpha_oracles(B, N, expected):
    assert compute_alpha(B, N) == pytest.approx(expected, rel=1e-12)


def test_alpha_errors():
    with pytest.raises(ConfigurationError):
        compute_alpha([1.0, 2.0], 1)
    with pytest.raises(ConfigurationError):
        compute_alpha([1.0, 0.5], 2)
    with pytest.raises(ConfigurationError):
        compute_alpha([1.0, 2.0], 3)


def test_B_eps_oracles():
    B = [1.0, 3.0]
    assert compute_B_eps(B, 2, 1.0, 1.0, 0.0, 1.0, 1.0) == 3.0
    # d = 2 (1 + 0.1)^2 = 2.42, c1 = 2 * 3.42 = 6.84, c2 = 1
    expected = 3.0 + 6.84 * 0.1 + 1.0 * 0.01
    assert compute_B_eps(B, 2, 1.0, 1.0, 0.1, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)
    assert expected - 3.0 == pytest.approx(0.694, rel=1e-12)
    with pytest.raises(ConfigurationError):
        compute_B_eps(B, 2, 1.0, 1.0, 0.1, 0.0, 1.0)


def test_B_eps_converges_to_B_N():
    B = [1.0, 2.0, 2.8, 3.5]
    gaps = [compute_B_eps(B, 4, 1.05, 3.0, e, 1.0, 1e-4) - 3.5 for e in 10.0 ** -np.arange(2, 12)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


@given(
    st.lists(st.floats(1.0, 5.0), min_size=2, max_size=6),
    st.integers(0, 10),
    st.floats(0.01, 2.0),
)
def test_alpha_monotone_in_each_B(values, idx, bump):
    B = np.maximum.accumulate(values)
    N = len(B)
    base = compute_alpha(B, N)
    i = idx % (N - 1) + 1  # B_2..B_N
    B2 = B.copy()
    B2[i] += bump
    assert compute_alpha(B2, N) <= base + 1e-12


@given(
    st.lists(st.floats(1.0, 5.0), min_size=1, max_size=6),
    st.floats(0.0, 3.0),
    st.floats(0.0, 5.0),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
def test_B_eps_nondecreasing_in_eps(values, L, C, e1, e2):
    B = np.maximum.accumulate(values)
    N = len(B)
    lo, hi = sorted((e1, e2))
    assert compute_B_eps(B, N, L, C, lo, 1.0, 0.5) <= compute_B_eps(B, N, L, C, hi, 1.0, 0.5) * (1 + 1e-12)


def test_growth_bounds_exact_plant(vdp):
    g = np.linspace(-1, 1, 3)
    xs = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    xs = xs[np.linalg.norm(xs, axis=1) > 0]
    B = estimate_growth_bounds(vdp, COST, OCP, xs, 6)
    assert B.B(0) == 1.0
    assert B.B(1) == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(B.values) >= 0) and np.all(B.values >= 1)
    assert np.isfinite(B.B(6))
    assert B.argmax.shape == (6, 2)
    with pytest.raises(ConfigurationError):
        B.B(7)
    with pytest.raises(ConfigurationError):
        estimate_growth_bounds(vdp, COST, OCP, np.zeros((1, 2)), 3)


def test_growth_bounds_drop_infeasible_samples():
    plant = ControlAffinePlant(1, 1, lambda x: 1.5 * x, lambda x: np.eye(1), Box.symmetric(5, 1), Box.symmetric(0.1, 1))
    cfg = OcpConfig(1, Box.symmetric(0.1, 1), Box.symmetric(1.0, 1))
    cost = StageCost.diagonal([1.0], [1.0])
    with pytest.warns(UserWarning, match="dropping"):
        B = estimate_growth_bounds(plant, cost, cfg, np.array([[0.1], [0.9]]), 4)
    assert len(B.samples) == 1
    with pytest.raises(InfeasibleError), pytest.warns(UserWarning):
        estimate_growth_bounds(plant, cost, cfg, np.array([[0.9]]), 4)


def test_minimal_horizon():
    seq = GrowthBoundSequence.from_values([1.0, 2.0, 2.9, 3.7, 4.4, 5.0])
    n = minimal_stabilizing_horizon(seq)
    assert n is not None and compute_alpha(seq, n) > 0
    assert all(compute_alpha(seq, k) <= 0 for k in range(2, n))
    assert minimal_stabilizing_horizon([1.0, 1e6, 1e6]) is None


def test_modulus_zero_and_deterministic(surrogate_121):
    zero = ControlSurrogate(
        surrogate_121.kernel, surrogate_121.clusters, np.zeros_like(surrogate_121.coef), surrogate_121.H
    )
    omega, ubox = Box.symmetric(2.0, 2), Box.symmetric(2.0, 1)
    assert estimate_modulus(zero, omega, ubox, 50) == 0.0
    a = estimate_modulus(surrogate_121, omega, ubox, 200, seed=4)
    assert a == estimate_modulus(surrogate_121, omega, ubox, 200, seed=4)
    rng = np.random.default_rng(9)
    for _ in range(20):
        x, y = omega.uniform(rng), omega.uniform(rng)
        u = ubox.uniform(rng)
        q = np.linalg.norm(surrogate_121.step(x, u) - surrogate_121.step(y, u)) / np.linalg.norm(x - y)
        # the maximal Jacobian norm bounds quotients only up to sampling
        assert q <= 1.5 * a
    with pytest.raises(ConfigurationError):
        estimate_modulus(surrogate_121, omega, ubox, 0)


def test_plant_lipschitz_vdp(vdp):
    L = plant_lipschitz(vdp, vdp.domain, vdp.control_box, resolution=21)
    assert 1.0 < L < 1.2


def test_convergence_study_trend(vdp):
    test = default_test_set(vdp.domain, vdp.control_box, per_axis=40)
    study = convergence_study(vdp, [49, 81, 121], test, fill_resolution=101)
    assert all(b < a for a, b in zip(study.fill_distance, study.fill_distance[1:]))
    assert all(b <= a for a, b in zip(study.sup_error, study.sup_error[1:]))
    assert np.isfinite(study.slope) and np.isfinite(study.residual)
    with pytest.raises(ConfigurationError):
        convergence_study(vdp, [121, 49], test)
    with pytest.raises(ConfigurationError):
        convergence_study(vdp, [50], test)
