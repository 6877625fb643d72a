"""Observed-data likelihood with a network random intercept."""
import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from enrtspill.errors import InputError
from enrtspill.mle import MleConfig, fit_mle, log_likelihood, to_transformed
from enrtspill.sim import ScenarioSpec, generate_dataset


def _bernoulli_loglik(data, p0, p1, ppv, npv):
    """Log-likelihood with no random effect, member by member."""
    ll = 0.0
    for i in np.flatnonzero(data.member_mask):
        y, gs = int(data.y[i]), int(data.g_star[i])
        pr = lambda g: (p1 if g else p0) if y else 1 - (p1 if g else p0)
        if data.v[i]:
            g = int(data.g[i])
            pg = (ppv if g else 1 - ppv) if gs else (npv if not g else 1 - npv)
            ll += math.log(pr(g)) + math.log(pg)
        else:
            w1 = ppv if gs else 1 - npv
            ll += math.log(w1 * pr(1) + (1 - w1) * pr(0))
    return ll


def richardson_gradient(f, x, h=1e-4):
    """Central differences at steps h and 2h combined to cancel the O(h^2) term."""
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * max(1.0, abs(x[i]))
        d1 = (f(x + e) - f(x - e)) / (2 * e[i])
        d2 = (f(x + 2 * e) - f(x - 2 * e)) / (4 * e[i])
        g[i] = (4 * d1 - d2) / 3
    return g


@pytest.fixture(scope="module")
def small():
    spec = ScenarioSpec(p_m=0.75, p_y0=0.25, rr=1.6, p_r=0.5, icc=0.1, k=60, n_k=3, reps=1, seed=5)
    return generate_dataset(spec, 0)


@pytest.mark.parametrize("scale", ["RD", "RR"])
def test_vanishing_variance_gives_bernoulli_likelihood(small, scale):
    p0, p1, ppv, npv = 0.25, 0.4, 0.8, 0.7
    delta = p1 - p0 if scale == "RD" else p1 / p0
    omega = to_transformed(p0, delta, math.exp(-40), ppv, npv, scale=scale)
    ll = log_likelihood(omega, small, MleConfig(scale=scale))
    assert math.isclose(ll, _bernoulli_loglik(small, p0, p1, ppv, npv), rel_tol=1e-9)


def test_single_member_network_matches_adaptive_quadrature(make_members):
    # one network, one unvalidated exposed case; fixed PPV/NPV so only the integral remains
    data = make_members([1, 0], [0], [1], with_indexes=False)
    p0, p1, s2, ppv, npv = 0.3, 0.5, 0.01, 0.9, 0.8
    sigma = math.sqrt(s2)
    lo, hi = max(-p0, -7 * sigma), min(1 - p1, 7 * sigma)
    f = lambda b: (ppv * (p1 + b) + (1 - ppv) * (p0 + b)) * stats.norm.pdf(b, scale=sigma)
    ref = math.log(integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12)[0])
    for nodes in (21, 61):
        cfg = MleConfig(quadrature_nodes=nodes, fixed_ppv_npv=(ppv, npv))
        ll = log_likelihood(to_transformed(p0, p1 - p0, s2), data, cfg)
        assert abs(ll - ref) < 1e-6


def test_node_count_agreement(small):
    omega = to_transformed(0.25, 0.15, 0.2, 0.8, 0.7)
    l21 = log_likelihood(omega, small, MleConfig(quadrature_nodes=21))
    l61 = log_likelihood(omega, small, MleConfig(quadrature_nodes=61))
    assert abs(l21 - l61) < 1e-6 * abs(l61)


def test_fixed_predictive_values_drop_validation_factor(small):
    ppv, npv = 0.8, 0.7
    omega = to_transformed(0.25, 0.15, 0.05, ppv, npv)
    full = log_likelihood(omega, small, MleConfig())
    fixed = log_likelihood(omega[:3], small, MleConfig(fixed_ppv_npv=(ppv, npv)))
    v = small.validation_mask
    g, gs = small.g[v], small.g_star[v]
    factor = (np.sum((g == 1) & (gs == 1)) * math.log(ppv) + np.sum((g == 0) & (gs == 1)) * math.log(1 - ppv)
              + np.sum((g == 0) & (gs == 0)) * math.log(npv) + np.sum((g == 1) & (gs == 0)) * math.log(1 - npv))
    assert math.isclose(full - fixed, factor, rel_tol=1e-10)


@pytest.mark.parametrize("scale", ["RD", "RR"])
def test_gradient_matches_finite_differences(small, scale):
    rng = np.random.default_rng(17)
    cfg = MleConfig(scale=scale)
    worst = 0.0
    for _ in range(20):
        p0 = rng.uniform(0.15, 0.35)
        p1 = rng.uniform(0.3, 0.6)
        omega = np.array([np.log(p0 / (1 - p0)), np.log(p1 / (1 - p1)), rng.uniform(-4, -1),
                          rng.uniform(0.5, 2), rng.uniform(0.3, 1.5)])
        _, g = log_likelihood(omega, small, cfg, gradient=True)
        fd = richardson_gradient(lambda z: log_likelihood(z, small, cfg), omega)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))))
    assert worst < 1e-5


def test_invariant_to_row_order(small):
    perm = np.random.default_rng(0).permutation(len(small))
    omega = to_transformed(0.25, 0.15, 0.1, 0.8, 0.7)
    assert math.isclose(log_likelihood(omega, small), log_likelihood(omega, small.take(perm)),
                        rel_tol=1e-12)


def test_fit_recovers_parameters_and_trace_is_monotone():
    # no clustering: the fitted model is correctly specified, sigma_b2 sits at its bound
    spec = ScenarioSpec(p_m=0.75, p_y0=0.25, rr=1.6, p_r=0.5, icc=0.0, k=1500, n_k=3, reps=1, seed=8)
    data = generate_dataset(spec, 0)
    fit = fit_mle(data)
    assert fit.converged
    assert abs(fit.estimates["delta"] - spec.true_rd) < 3 * fit.se["delta"]
    assert 0 < fit.se["delta"] < 0.1
    tr = np.array(fit.trace)
    assert np.all(np.diff(tr) > -1e-8 * np.abs(tr[:-1]))
    assert fit.effect.ci_low < fit.effect.point < fit.effect.ci_high

    rr = fit_mle(data, MleConfig(scale="RR"))
    assert abs(math.log(rr.estimates["delta"]) - math.log(spec.rr)) < 3 * rr.se_log_delta


def test_fit_with_fixed_predictive_values(small):
    fit = fit_mle(small, MleConfig(fixed_ppv_npv=(0.85, 0.9)))
    assert fit.estimates["ppv"] == 0.85 and fit.estimates["npv"] == 0.9
    assert fit.se["ppv"] == 0.0 and fit.se["npv"] == 0.0
    assert fit.se["delta"] > 0 and fit.theta_hat.size == 3


def test_fit_needs_validation(make_members):
    data = make_members([1, 0, 1, 0], [0, 0, 1, 1, 2, 2, 3, 3], [1, 0, 1, 1, 0, 1, 0, 0])
    with pytest.raises(InputError):
        fit_mle(data)


def test_config_validation():
    with pytest.raises(InputError):
        MleConfig(quadrature_nodes=3)
    with pytest.raises(InputError):
        MleConfig(scale="OR")
