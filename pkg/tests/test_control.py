import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kedmd_mpc import (
    ClusterDataset,
    ClusterSet,
    DatasetError,
    WendlandKernel,
    chebyshev_grid,
    error_constants,
    eval_surrogate,
    fit_control_surrogate,
    generate_cluster_data,
    local_regression,
    surrogate_jacobian_x,
    validate_dataset,
)
from kedmd_mpc.control import empirical_sup_error, koopman_matrices, max_quadratic_on_cube
from kedmd_mpc.sets import Box
from kedmd_mpc.systems import ControlAffinePlant

K1 = WendlandKernel()


def make_dataset(points, plant_step, controls, eps_c=0.0, offsets=None):
    """Dataset with the same control list at every cluster point."""
    X = ClusterSet(np.asarray(points, dtype=float))
    U = np.asarray(controls, dtype=float).reshape(-1, 1)
    states, ctrls, succ = [], [], []
    for i, c in enumerate(X.points):
        S = np.repeat(c[None], len(U), 0) if offsets is None else c + offsets[i]
        states.append(S)
        ctrls.append(U.copy())
        succ.append(np.array([plant_step(s, u) for s, u in zip(S, U)]))
    return ClusterDataset(X, tuple(states), tuple(ctrls), tuple(succ), eps_c, 1, None)


def dense_blocks(data, kernel):
    """Brute-force oracle: explicit inverse, entry-wise matrices, pinv regression."""
    X = data.clusters.points
    d = len(X)
    Kinv = np.linalg.inv(np.array([[kernel(X[i], X[j]) for j in range(d)] for i in range(d)]))
    H = []
    for S, U in zip(data.successors, data.controls):
        Ui = np.vstack([np.ones(len(U)), np.asarray(U).T])
        H.append(S.T @ np.linalg.pinv(Ui))
    blocks = []
    for j in range(data.m + 1):
        M = np.array([[kernel(H[k][:, j], X[l]) for l in range(d)] for k in range(d)])
        blocks.append((Kinv @ M @ Kinv @ X).T)
    return np.array(blocks)


def random_instance(rng, d):
    pts = [np.zeros(2)]
    while len(pts) < d:
        p = rng.uniform(-1.5, 1.5, 2)
        if min(np.linalg.norm(p - q) for q in pts) > 0.15:
            pts.append(p)
    a, b = rng.uniform(0.5, 1.0, 2)

    def step(x, u):
        return np.array([a * x[0] + 0.1 * np.sin(x[1]), b * x[1] - 0.1 * x[0] ** 2]) + np.array([0.02, 0.1]) * u

    eps = 0.01
    offsets = rng.uniform(-eps / 2, eps / 2, (d, 6, 2))
    return make_dataset(pts, step, rng.uniform(-2, 2, 6), eps, offsets)


def test_validation_report():
    step = lambda x, u: x
    ok = make_dataset([[0, 0], [0.5, 0.5]], step, [1.0, -1.0, 0.5])
    rep = validate_dataset(ok)
    assert rep.passed and "valid" in str(rep)
    zero = make_dataset([[0, 0], [0.5, 0.5]], step, [0.0, 0.0, 0.0])
    rep = validate_dataset(zero)
    assert not rep.passed and any("rank 0" in f for f in rep.failures())
    offsets = np.zeros((2, 3, 2))
    offsets[1, 2] = [0.02, 0.0]
    far = make_dataset([[0, 0], [0.5, 0.5]], step, [1.0, -1.0, 0.5], eps_c=0.01, offsets=offsets)
    rep = validate_dataset(far)
    assert not rep.passed and any("cluster 1" in f and "distance" in f for f in rep.failures())
    few = make_dataset([[0, 0], [0.5, 0.5]], step, [1.0])
    assert any("only 1 samples" in f for f in validate_dataset(few).failures())
    not_origin = make_dataset([[0.1, 0], [0.5, 0.5]], step, [1.0, -1.0])
    assert "origin" in validate_dataset(not_origin).failures()[0]


def test_local_regression_closed_form():
    xp, xm = np.array([0.3, 0.7]), np.array([-0.1, 0.2])
    H, pinv_norm = local_regression(np.array([xp, xm]), np.array([[1.0], [-1.0]]))
    np.testing.assert_allclose(H[:, 0], (xp + xm) / 2, rtol=1e-14)
    np.testing.assert_allclose(H[:, 1], (xp - xm) / 2, rtol=1e-14)
    # U = [[1, 1], [1, -1]] has both singular values sqrt(2)
    assert pinv_norm == pytest.approx(1 / np.sqrt(2), rel=1e-14)


def test_local_regression_rank_deficient():
    with pytest.raises(DatasetError, match="cluster 4"):
        local_regression(np.ones((3, 2)), np.full((3, 1), 0.7), cluster=4)


def test_local_regression_beats_random_candidates(rng):
    S = rng.standard_normal((8, 2))
    U = rng.uniform(-2, 2, (8, 1))
    Ua = np.vstack([np.ones(8), U.T])
    H, _ = local_regression(S, U)
    best = np.linalg.norm(S.T - H @ Ua)
    for _ in range(500):
        cand = H + rng.normal(scale=0.1, size=H.shape)
        assert best <= np.linalg.norm(S.T - cand @ Ua) + 1e-12


def test_local_regression_duplication_invariant(rng):
    S = rng.standard_normal((5, 2))
    U = rng.uniform(-2, 2, (5, 1))
    H1, _ = local_regression(S, U)
    H2, _ = local_regression(np.vstack([S, S]), np.vstack([U, U]))
    assert np.max(np.abs(H1 - H2)) <= 1e-10


def test_regression_exact_for_vdp(vdp, surrogate_441):
    for x, H in zip(surrogate_441.clusters.points, surrogate_441.H):
        np.testing.assert_allclose(H[:, 0], vdp.drift(x), atol=1e-10, rtol=0)
        np.testing.assert_allclose(H[:, 1:], vdp.input_map(x), atol=1e-10, rtol=0)


def test_zero_system_gives_zero_surrogate(rng):
    data = make_dataset(chebyshev_grid(5).points, lambda x, u: np.zeros(2), [1.0, -1.0, 0.3])
    model = fit_control_surrogate(data, K1)
    assert np.all(model.coef == 0.0)
    xs = rng.uniform(-2, 2, (30, 2))
    us = rng.uniform(-2, 2, (30, 1))
    assert np.all(eval_surrogate(model, xs, us) == 0.0)
    assert empirical_sup_error(model, lambda x, u: np.zeros(2), xs, us).sup_error == 0.0


def test_single_cluster_scalars():
    step = lambda x, u: np.array([0.2, -0.1]) + np.array([0.0, 0.5]) * u
    data = make_dataset([[0.0, 0.0]], step, [1.0, -1.0, 0.5])
    model = fit_control_surrogate(data, K1)
    Khat = koopman_matrices(model)
    for j, col in enumerate(([0.2, -0.1], [0.0, 0.5])):
        assert Khat[j, 0, 0] == pytest.approx(20 * K1(np.zeros(2), col) * 20, rel=1e-12)


def test_blocks_match_dense_oracle(rng):
    for d in (3, 5):
        data = random_instance(rng, d)
        model = fit_control_surrogate(data, K1)
        ref = dense_blocks(data, K1)
        assert np.linalg.norm(model.coef - ref) <= 1e-8 * max(np.linalg.norm(ref), 1e-300)


def test_far_points_zero_and_jacobian(surrogate_441, rng):
    for x in ([5.0, 5.0], [-3.1, 0.0], [0.0, 10.0]):
        x = np.array(x)
        assert np.all(surrogate_441.step(x, [1.3]) == 0.0)
        assert np.all(surrogate_jacobian_x(surrogate_441, x, [1.3]) == 0.0)
    J = surrogate_jacobian_x(surrogate_441, surrogate_441.clusters.points[7], [0.4])
    assert np.all(np.isfinite(J))


def test_jacobian_matches_fd(surrogate_441, rng):
    h = 1e-6
    for _ in range(30):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-2, 2, 1)
        J = surrogate_jacobian_x(surrogate_441, x, u)
        fd = np.stack(
            [(surrogate_441.step(x + h * e, u) - surrogate_441.step(x - h * e, u)) / (2 * h) for e in np.eye(2)], 1
        )
        assert np.max(np.abs(J - fd)) <= 1e-5


def test_linearize_consistent(surrogate_441, rng):
    x = rng.uniform(-1, 1, 2)
    u = np.array([0.7])
    F, A, G = surrogate_441.linearize(x, u)
    np.testing.assert_allclose(F, surrogate_441.step(x, u), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(G, surrogate_441.input_map(x), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(F, surrogate_441.drift(x) + G @ u, rtol=1e-12, atol=1e-15)


def test_batch_eval_matches_single(surrogate_121, rng):
    xs = rng.uniform(-2, 2, (10, 2))
    us = rng.uniform(-2, 2, (10, 1))
    batch = eval_surrogate(surrogate_121, xs, us)
    single = np.array([surrogate_121.step(x, u) for x, u in zip(xs, us)])
    np.testing.assert_allclose(batch, single, rtol=1e-12, atol=1e-15)


@given(
    arrays(np.float64, 2, elements=st.floats(-2.5, 2.5)),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_affine_in_u(surrogate_121, x, u1, u2):
    lhs = surrogate_121.step(x, [u1]) + surrogate_121.step(x, [u2]) - surrogate_121.step(x, [0.0])
    assert np.max(np.abs(lhs - surrogate_121.step(x, [u1 + u2]))) <= 1e-10


def test_error_constants_single_cluster():
    step = lambda x, u: np.array([0.1, 0.0]) + np.array([0.0, 0.05]) * u
    data = make_dataset([[0.0, 0.0]], step, [1.0, -1.0, 0.5, 0.25])
    model = fit_control_surrogate(data, K1)
    ec = error_constants(model, data, Box.symmetric(2.0, 2), resolution=41)
    assert ec.c == pytest.approx(model.pinv_norms[0] * 1.0, rel=1e-12)
    assert ec.bound_type == "exact"
    assert ec.inverse_norm == pytest.approx(20.0, rel=1e-10)
    assert ec.eps_h == pytest.approx(ec.fill_distance**0.5, rel=1e-14)


def test_quadratic_max_exact_dominates_random(rng):
    A = rng.standard_normal((4, 4))
    A = A @ A.T + 0.5 * np.eye(4)
    solve = lambda v: np.linalg.solve(A, v)
    exact = max_quadratic_on_cube(solve, 4)
    assert exact.bound_type == "exact"
    for _ in range(200):
        v = rng.uniform(-1, 1, 4)
        assert v @ solve(v) <= exact.value + 1e-12
    lower = max_quadratic_on_cube(solve, 4, exact_limit=2, n_random=50)
    assert lower.bound_type == "lower" and lower.value <= exact.value + 1e-12


def test_sup_error_self_is_zero(surrogate_121, rng):
    xs = rng.uniform(-2, 2, (50, 2))
    us = rng.uniform(-2, 2, (50, 1))
    res = empirical_sup_error(surrogate_121, surrogate_121.step, xs, us)
    # batch and pointwise evaluation may differ in the last bit
    assert res.sup_error <= 1e-14 and res.n_points == 50


def test_monotone_refinement_small_grids(vdp):
    rng = np.random.default_rng(0)
    xs = rng.uniform(-2, 2, (2000, 2))
    us = rng.uniform(-2, 2, (2000, 1))
    errs = []
    for root in (11, 15, 21):
        data = generate_cluster_data(vdp, chebyshev_grid(root), 0.0, 25, seed=0)
        errs.append(empirical_sup_error(fit_control_surrogate(data, K1), vdp.step, xs, us).sup_error)
    assert errs[0] >= errs[1] >= errs[2], errs


@pytest.fixture(scope="module")
def vdp_pair(vdp, surrogate_441):
    data = generate_cluster_data(vdp, chebyshev_grid(41), 0.0, 25, seed=0)
    rng = np.random.default_rng(1)
    xs = rng.uniform(-2, 2, (1000, 2))
    us = rng.uniform(-2, 2, (1000, 1))
    fine = fit_control_surrogate(data, K1)
    return [empirical_sup_error(m, vdp.step, xs, us) for m in (surrogate_441, fine)]


def test_sup_error_decreases_441_to_1681(vdp_pair):
    coarse, fine = vdp_pair
    assert fine.sup_error < coarse.sup_error


@pytest.mark.xfail(
    strict=True,
    reason="F_eps is not exact at cluster points, so error/dist(x, X) grows as test points "
    "get closer to a denser grid (measured 9.05 at d=441 vs 18.5 at d=1681)",
)
def test_sup_ratio_non_increasing_441_to_1681(vdp_pair):
    coarse, fine = vdp_pair
    assert fine.sup_ratio <= coarse.sup_ratio


def test_origin_residual_is_small(vdp, surrogate_441):
    # exactness at cluster points is not claimed; the residual at the origin is tiny but nonzero
    x0 = surrogate_441.clusters.points[0]
    res = np.max(np.abs(surrogate_441.step(x0, [0.5]) - vdp.step(x0, [0.5])))
    assert 0.0 < res < 1e-3
