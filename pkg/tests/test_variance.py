"""Delta-method variances, ICC / design effect, network bootstrap."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enrtspill.errors import DegenerateVariance, InsufficientClusters, TooManyFailedReplicates
from enrtspill.estimators import matrix_cells, inverse_cells, rd_rr
from enrtspill.model import FourfoldTable, MisclassModel, build_fourfold
from enrtspill.sim import ScenarioSpec, generate_dataset
from enrtspill.variance import (
    BootstrapSpec,
    _anova_icc,
    delta_variance,
    design_effect,
    design_effect_inflate,
    estimate_icc,
    inverse_gradients,
    matrix_gradients,
    network_bootstrap,
    numerical_gradient,
)

TABLE = FourfoldTable(34, 26, 56, 84)


def test_naive_delta_matches_binomial_formula():
    dv = delta_variance(TABLE, "naive")
    p1, n1, p0, n0 = 34 / 90, 90, 26 / 110, 110
    assert math.isclose(dv.var_rd, p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0, rel_tol=1e-12)
    assert math.isclose(dv.var_log_rr, (1 - p1) / (n1 * p1) + (1 - p0) / (n0 * p0), rel_tol=1e-12)


def _matrix_f(x, which):
    a, b, c, d = matrix_cells(*x)
    rd, rr = rd_rr(a, b, c, d)
    return float(rd) if which == 0 else float(np.log(rr))


@settings(max_examples=30)
@given(cells=st.tuples(*[st.floats(20, 500)] * 4), theta=st.floats(0.6, 0.98), phi=st.floats(0.6, 0.98))
def test_matrix_gradient_matches_finite_differences(cells, theta, phi):
    x = np.array(cells + (theta, phi))
    a, b, c, d = matrix_cells(*x)
    if min(a, b, c, d) <= 1:
        return
    g_rd, g_lrr = matrix_gradients(*x)
    for which, g in ((0, g_rd), (1, g_lrr)):
        fd = numerical_gradient(lambda z: _matrix_f(z, which), x)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-9)


def test_inverse_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = np.r_[rng.uniform(20, 300, 4), rng.uniform(0.3, 0.95, 4)]
        f_rd = lambda z: float(rd_rr(*inverse_cells(*z))[0])
        f_lrr = lambda z: float(np.log(rd_rr(*inverse_cells(*z))[1]))
        g_rd, g_lrr = inverse_gradients(*x)
        np.testing.assert_allclose(g_rd, numerical_gradient(f_rd, x), rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(g_lrr, numerical_gradient(f_lrr, x), rtol=1e-5, atol=1e-9)


def test_matrix_with_perfect_classification_equals_naive():
    mc = MisclassModel(1.0, 1.0)
    dm = delta_variance(TABLE, "matrix", misclass=mc, known=True)
    dn = delta_variance(TABLE, "naive")
    assert math.isclose(dm.var_rd, dn.var_rd, rel_tol=1e-12)
    assert math.isclose(dm.var_log_rr, dn.var_log_rr, rel_tol=1e-12)


def test_validation_term_adds_gradient_squared_times_variance():
    mc = MisclassModel(0.8, 0.9, se_theta=0.05, se_phi=0.03)
    known = delta_variance(TABLE, "matrix", misclass=mc, known=True)
    full = delta_variance(TABLE, "matrix", misclass=mc)
    g = known.grad_rd
    assert math.isclose(full.var_rd - known.var_rd, g[4] ** 2 * 0.05 ** 2 + g[5] ** 2 * 0.03 ** 2,
                        rel_tol=1e-10)
    big = delta_variance(TABLE, "matrix", misclass=mc, validation_scale=10)
    assert known.var_rd < big.var_rd < full.var_rd
    assert math.isclose(big.var_rd - known.var_rd, (full.var_rd - known.var_rd) / 10, rel_tol=1e-10)


def test_delta_degenerate_margin():
    with pytest.raises(DegenerateVariance):
        delta_variance(FourfoldTable(0, 5, 5, 5), "naive")


def _icc_by_loops(groups):
    """Textbook one-way ANOVA ICC for a list of 0/1 outcome lists."""
    N = sum(len(g) for g in groups)
    K = len(groups)
    grand = sum(sum(g) for g in groups) / N
    ssb = sum(len(g) * (np.mean(g) - grand) ** 2 for g in groups)
    ssw = sum(sum((v - np.mean(g)) ** 2 for v in g) for g in groups)
    msb, msw = ssb / (K - 1), ssw / (N - K)
    n0 = (N - sum(len(g) ** 2 for g in groups) / N) / (K - 1)
    return (msb - msw) / (msb + (n0 - 1) * msw)


def test_anova_icc_matches_textbook():
    rng = np.random.default_rng(0)
    groups = [list(rng.integers(0, 2, size=rng.integers(2, 6))) for _ in range(40)]
    ysum = np.array([sum(g) for g in groups], float)
    size = np.array([len(g) for g in groups], float)
    rho, *_ = _anova_icc(ysum, ysum, size)
    assert math.isclose(rho, _icc_by_loops(groups), rel_tol=1e-10)


def test_stratified_icc_removes_arm_effect():
    # every arm-1 network has 5 of 6 cases, every arm-0 network 1 of 6:
    # no clustering within arms, only a treatment effect between them
    ysum = np.array([5, 5, 5, 1, 1, 1], float)
    size = np.full(6, 6.0)
    arm = np.array([1, 1, 1, 0, 0, 0])
    rho_pooled, *_ = _anova_icc(ysum, ysum, size)
    rho_strat, *_ = _anova_icc(ysum, ysum, size, arm)
    assert rho_pooled > 0.3
    assert math.isclose(rho_strat, -0.2)      # MSB = 0 -> -1 / (n0 - 1) with n0 = 6


def test_icc_needs_multi_member_networks(make_members):
    data = make_members([1, 0, 1], [0, 1, 2], [1, 0, 1])
    with pytest.raises(InsufficientClusters):
        estimate_icc(data)


def test_icc_zero_without_clustering():
    spec = ScenarioSpec(p_m=1.0, p_y0=0.3, rr=1.5, p_r=0.5, icc=0.0, k=2000, n_k=3, reps=1, seed=4)
    est = estimate_icc(generate_dataset(spec, 0))
    assert abs(est.rho_raw) < 0.05


def test_design_effect():
    assert design_effect(3, 0.25) == 1.5
    assert design_effect(1, 0.9) == 1.0
    assert math.isclose(design_effect_inflate(0.1, 3, 0.25), 0.1 * math.sqrt(1.5))


def test_bootstrap_deterministic_across_workers(sim_dataset):
    spec = BootstrapSpec(replicates=120, seed=7)
    r1 = network_bootstrap(sim_dataset, spec, "matrix", workers=1)
    r4 = network_bootstrap(sim_dataset, spec, "matrix", workers=4)
    np.testing.assert_array_equal(r1.replicates_rd, r4.replicates_rd)
    assert r1.rd == r4.rd
    r_other = network_bootstrap(sim_dataset, BootstrapSpec(replicates=120, seed=8), "matrix")
    assert not np.array_equal(r1.replicates_rd, r_other.replicates_rd)


def test_bootstrap_prefix_is_stable(sim_dataset):
    # replicate i depends only on (seed, i): more replicates extend, never reshuffle
    a = network_bootstrap(sim_dataset, BootstrapSpec(replicates=50, seed=3), "naive")
    b = network_bootstrap(sim_dataset, BootstrapSpec(replicates=80, seed=3), "naive")
    np.testing.assert_array_equal(a.replicates_rd, b.replicates_rd[:50])


def test_bootstrap_naive_se_close_to_delta():
    spec = ScenarioSpec(p_m=1.0, p_y0=0.3, rr=1.5, p_r=0.5, icc=0.0, k=600, n_k=3, reps=1, seed=12)
    data = generate_dataset(spec, 0)
    br = network_bootstrap(data, BootstrapSpec(replicates=400, seed=1), "naive")
    dv = delta_variance(build_fourfold(data), "naive")
    assert abs(br.rd.se / dv.se_rd - 1) < 0.15
    assert br.rd.ci_low < br.rd.point < br.rd.ci_high


def test_bootstrap_too_many_failures(make_members):
    # one validation member per (Y, G*) stratum, all in networks 0 and 1:
    # a resample missing either network loses a stratum (~60% of replicates)
    arms = [1, 0] * 10
    obs = np.repeat(np.arange(20), 2)
    y = np.tile([1, 0], 20)
    v = np.zeros(40)
    v[[0, 1, 2, 3]] = 1
    data = make_members(arms, obs, y, v=v)
    with pytest.raises(TooManyFailedReplicates):
        network_bootstrap(data, BootstrapSpec(replicates=100, seed=1), "inverse_matrix")
