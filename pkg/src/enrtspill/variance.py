"""Interval estimation for naive and corrected ASpE estimators.

* delta method: main-study cells are multinomial given ``N``; estimated
  misclassification parameters add independent binomial terms.
* design effect: variance times ``1 + (m - 1) * rho``.
* network bootstrap: observed networks resampled whole, validation members
  travelling with their networks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special

from .errors import DegenerateVariance, EstimationError, InputError, InsufficientClusters, TooManyFailedReplicates
from .estimators import (
    INVERTIBILITY_TOL,
    PredictiveValues,
    inverse_cells,
    matrix_cells,
    naive_aspe,
    predictive_values_from_counts,
    rd_rr,
)
from .model import (
    EffectEstimate,
    EnrtData,
    FourfoldTable,
    MisclassModel,
    Z95,
    network_counts,
)

LOGISTIC_RESIDUAL_VAR = 3.29  # standard logistic residual variance, pi^2/3 rounded


# -- delta method ------------------------------------------------------------------

def naive_delta_var(A, B, C, D):
    """Variance of the naive RD and log RR (two independent binomials)."""
    n1 = A + C
    n0 = B + D
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = A / n1
        p0 = B / n0
        var_rd = p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0
        var_lrr = (1 - p1) / A + (1 - p0) / B
    return var_rd, var_lrr


def matrix_gradients(A, B, C, D, theta, phi):
    """Gradients of corrected RD and log RR w.r.t. (A, B, C, D, theta, phi).

    Arrays broadcast; the parameter axis is the last one.
    """
    A, B, C, D, theta, phi = np.broadcast_arrays(*(np.asarray(x, dtype=float)
                                                   for x in (A, B, C, D, theta, phi)))
    N = A + B + C + D
    m1 = A + B
    zero = np.zeros_like(A)
    # exposed risk t1 = u1/v1, unexposed risk t0 = u0/v0
    u1 = B - phi * m1
    v1 = B + D - phi * N
    u0 = A - theta * m1
    v0 = A + C - theta * N
    du1 = np.stack([-phi, 1 - phi, zero, zero, zero, -m1], axis=-1)
    dv1 = np.stack([-phi, 1 - phi, -phi, 1 - phi, zero, -N], axis=-1)
    du0 = np.stack([1 - theta, -theta, zero, zero, -m1, zero], axis=-1)
    dv0 = np.stack([1 - theta, -theta, 1 - theta, -theta, -N, zero], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (u1 / v1)[..., None]
        t0 = (u0 / v0)[..., None]
        dt1 = (du1 - t1 * dv1) / v1[..., None]
        dt0 = (du0 - t0 * dv0) / v0[..., None]
        return dt1 - dt0, dt1 / t1 - dt0 / t0


def inverse_gradients(A, B, C, D, ppv1, npv1, ppv0, npv0):
    """Gradients of inverse-matrix RD and log RR w.r.t. (A, B, C, D, PPV1, NPV1, PPV0, NPV0)."""
    A, B, C, D, P1, Q1, P0, Q0 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in
                                                       (A, B, C, D, ppv1, npv1, ppv0, npv0)))
    z = np.zeros_like(A)
    a, b, c, d = inverse_cells(A, B, C, D, P1, Q1, P0, Q0)
    da = np.stack([P1, 1 - Q1, z, z, A, -B, z, z], axis=-1)
    db = np.stack([1 - P1, Q1, z, z, -A, B, z, z], axis=-1)
    dc = np.stack([z, z, P0, 1 - Q0, z, z, C, -D], axis=-1)
    dd = np.stack([z, z, 1 - P0, Q0, z, z, -C, D], axis=-1)
    n1 = (a + c)[..., None]
    n0 = (b + d)[..., None]
    a, b, c, d = (x[..., None] for x in (a, b, c, d))
    with np.errstate(divide="ignore", invalid="ignore"):
        dt1 = (da * c - a * dc) / n1 ** 2
        dt0 = (db * d - b * dd) / n0 ** 2
        t1 = a / n1
        t0 = b / n0
        return dt1 - dt0, dt1 / t1 - dt0 / t0


def _multinomial_quad(cells, grad):
    """g' Cov(cells) g for multinomial cells with N fixed."""
    N = cells.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (cells * grad ** 2).sum(axis=-1) - (cells * grad).sum(axis=-1) ** 2 / N


def matrix_delta_var(A, B, C, D, theta, phi, var_theta=0.0, var_phi=0.0):
    g_rd, g_lrr = matrix_gradients(A, B, C, D, theta, phi)
    cells = np.stack(np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (A, B, C, D))), axis=-1)
    out = []
    for g in (g_rd, g_lrr):
        v = _multinomial_quad(cells, g[..., :4]) + g[..., 4] ** 2 * var_theta + g[..., 5] ** 2 * var_phi
        out.append(v)
    return tuple(out)


def inverse_delta_var(A, B, C, D, ppv1, npv1, ppv0, npv0, param_vars=(0.0, 0.0, 0.0, 0.0)):
    with np.errstate(divide="ignore", invalid="ignore"):
        g_rd, g_lrr = inverse_gradients(A, B, C, D, ppv1, npv1, ppv0, npv0)
    cells = np.stack(np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (A, B, C, D))), axis=-1)
    out = []
    for g in (g_rd, g_lrr):
        v = _multinomial_quad(cells, g[..., :4])
        for j, pv in enumerate(param_vars):
            with np.errstate(invalid="ignore"):
                v = v + g[..., 4 + j] ** 2 * pv
        out.append(v)
    return tuple(out)


@dataclass(frozen=True)
class DeltaResult:
    """Delta-method variances of RD and log RR; gradients kept for inspection."""

    method: str
    var_rd: float
    var_log_rr: float
    known: bool
    grad_rd: Optional[np.ndarray] = None
    grad_log_rr: Optional[np.ndarray] = None

    @property
    def se_rd(self) -> float:
        return float(np.sqrt(self.var_rd))

    @property
    def se_log_rr(self) -> float:
        return float(np.sqrt(self.var_log_rr))


def delta_variance(table: FourfoldTable, method: str = "naive",
                   misclass: Optional[MisclassModel] = None,
                   predictive: Optional[PredictiveValues] = None,
                   known: bool = False, validation_scale: float = 1.0) -> DeltaResult:
    """Delta-method variance of the RD and log RR for one estimator.

    Parameters
    ----------
    table : FourfoldTable
        The *observed* main-study table.
    method : {"naive", "true_exposure", "matrix", "inverse_matrix"}
    misclass : MisclassModel
        Required for ``"matrix"``; its ``se_theta``/``se_phi`` feed the
        validation term unless ``known``.
    predictive : PredictiveValues
        Required for ``"inverse_matrix"``.
    known : bool
        Treat misclassification parameters as fixed constants.
    validation_scale : float
        Multiplies the validation sample size (``10`` mimics a validation
        study ten times larger with the same estimates).
    """
    A, B, C, D = table.a, table.b, table.c, table.d
    if method in ("naive", "true_exposure"):
        if min(A, B) <= 0 or table.n1 <= 0 or table.n0 <= 0:
            raise DegenerateVariance("naive variance needs A > 0, B > 0 and non-empty exposure groups")
        v_rd, v_lrr = naive_delta_var(A, B, C, D)
        return DeltaResult(method, float(v_rd), float(v_lrr), True)
    if validation_scale <= 0:
        raise InputError("validation_scale must be positive")
    if method == "matrix":
        if misclass is None:
            raise InputError("matrix variance needs a MisclassModel")
        vt = 0.0 if known else misclass.var_theta / validation_scale
        vp = 0.0 if known else misclass.var_phi / validation_scale
        g_rd, g_lrr = matrix_gradients(A, B, C, D, misclass.theta, misclass.phi)
        v_rd, v_lrr = matrix_delta_var(A, B, C, D, misclass.theta, misclass.phi, vt, vp)
    elif method == "inverse_matrix":
        if predictive is None:
            raise InputError("inverse-matrix variance needs PredictiveValues")
        pvars = (0.0,) * 4 if known else tuple(predictive.variances(validation_scale))
        g_rd, g_lrr = inverse_gradients(A, B, C, D, *predictive.as_tuple())
        v_rd, v_lrr = inverse_delta_var(A, B, C, D, *predictive.as_tuple(), param_vars=pvars)
    else:
        raise InputError(f"unknown method {method!r}")
    if not (np.isfinite(v_rd) and np.isfinite(v_lrr)) or v_rd < 0 or v_lrr < 0:
        raise DegenerateVariance(f"{method} delta variance is not finite (a corrected margin is zero)")
    return DeltaResult(method, float(v_rd), float(v_lrr), known, g_rd, g_lrr)


def numerical_gradient(f, x, rel_step=1e-6):
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


# -- ICC and design effect ----------------------------------------------------------

@dataclass(frozen=True)
class IccEstimate:
    """One-way ANOVA intracluster correlation of member outcomes.

    ``rho`` is truncated at 0 for design-effect use; ``rho_raw`` is the
    untruncated moment estimate.  ``latent_rho`` (when requested) comes from
    a logistic random-intercept fit with residual variance 3.29.
    """

    rho: float
    rho_raw: float
    sigma_b2: float
    sigma_w2: float
    n_networks: int
    mean_network_size: float
    method: str = "anova_moments"
    latent_sigma_b2: Optional[float] = None
    latent_rho: Optional[float] = None

    @property
    def design_effect(self) -> float:
        return design_effect(self.mean_network_size, self.rho)


def _anova_icc(ysum, yss, size, stratum=None):
    """Moment ICC from per-cluster sums, sums of squares and sizes (all arrays).

    With ``stratum`` (one label per cluster, e.g. the network arm) the
    between-cluster sum of squares is taken about stratum means, so a
    treatment effect is not mistaken for clustering.
    """
    keep = size > 0
    ysum, yss, size = ysum[keep], yss[keep], size[keep]
    strata = np.zeros(size.size, dtype=np.int64) if stratum is None \
        else np.unique(np.asarray(stratum)[keep], return_inverse=True)[1]
    S = strata.max() + 1 if strata.size else 0
    K = size.size
    N = size.sum()
    if K - S < 1:
        raise InsufficientClusters(f"need at least 2 networks with members per stratum, got {K}")
    if N - K <= 0:
        raise InsufficientClusters("every network has a single member; within-network variance is not estimable")
    n_s = np.bincount(strata, weights=size, minlength=S)
    t_s = np.bincount(strata, weights=ysum, minlength=S)
    q_s = np.bincount(strata, weights=size ** 2, minlength=S)
    ssb = (ysum ** 2 / size).sum() - (t_s ** 2 / n_s).sum()
    ssw = yss.sum() - (ysum ** 2 / size).sum()
    msb = ssb / (K - S)
    msw = ssw / (N - K)
    n0 = (N - (q_s / n_s).sum()) / (K - S)
    if msb <= 0 and msw <= 0:
        raise DegenerateVariance("outcome is constant within every stratum")
    sigma_b2 = (msb - msw) / n0
    rho = 1.0 if msw <= 0 else (msb - msw) / (msb + (n0 - 1) * msw)
    return rho, sigma_b2, msw, K, N / K


def estimate_icc(data: EnrtData, grouping: str = "observed", latent: bool = False,
                 by_arm: bool = True, nodes: int = 21) -> IccEstimate:
    """ICC of member outcomes grouped by network.

    ``grouping="observed"`` uses the recorded networks (all an analyst has);
    ``"true"`` uses ``true_network`` codes and is meant for simulation
    checks.  ``by_arm`` pools the ANOVA within network arms, so that a
    spillover effect does not inflate the ICC.  ``latent=True`` additionally fits a logistic random-intercept
    model with exposure as covariate to report the latent-scale ICC.
    """
    mem = data.member_mask
    if grouping == "observed":
        groups = data.network[mem]
        expo = data.g_star[mem]
    elif grouping == "true":
        groups = data.true_network[mem]
        expo = data.g[mem]
        if np.any(groups < 0):
            raise InputError("true network unknown for some members")
    else:
        raise InputError(f"grouping must be 'observed' or 'true', got {grouping!r}")
    y = data.y[mem].astype(float)
    K = data.n_networks
    size = np.bincount(groups, minlength=K).astype(float)
    ysum = np.bincount(groups, weights=y, minlength=K)
    stratum = data.network_arm if by_arm else None
    rho, sb2, sw2, k_used, m_bar = _anova_icc(ysum, ysum, size, stratum)  # binary y: sum of squares = sum
    lat_s2 = lat_rho = None
    if latent:
        lat_s2 = latent_sigma_b2(y, groups, expo.astype(float), nodes=nodes)
        lat_rho = lat_s2 / (lat_s2 + LOGISTIC_RESIDUAL_VAR)
    return IccEstimate(rho=max(rho, 0.0), rho_raw=float(rho), sigma_b2=float(sb2),
                       sigma_w2=float(sw2), n_networks=int(k_used), mean_network_size=float(m_bar),
                       latent_sigma_b2=lat_s2, latent_rho=lat_rho)


def latent_sigma_b2(y, groups, x, nodes: int = 21) -> float:
    """Random-intercept variance of a logistic GLMM ``logit p = b0 + b1 x + u``.

    Marginal likelihood by Gauss-Hermite quadrature; clusters are
    compressed to (size, cases, covariate pattern) counts.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    _, g = np.unique(groups, return_inverse=True)
    K = g.max() + 1
    # per cluster counts of (x, y) combos: n_x1y1, n_x1y0, n_x0y1, n_x0y0
    cnt = np.bincount(g * 4 + 2 * (1 - x.astype(int)) + (1 - y.astype(int)),
                      minlength=4 * K).reshape(K, 4)
    pats, mult = np.unique(cnt, axis=0, return_counts=True)
    gh_x, gh_w = np.polynomial.hermite.hermgauss(nodes)
    logw = np.log(gh_w / np.sqrt(np.pi))

    def nll(par):
        b0, b1, ls = par
        s = np.exp(0.5 * ls)
        u = np.sqrt(2) * s * gh_x
        eta1 = b0 + b1 + u
        eta0 = b0 + u
        ll = (pats[:, [0]] * -np.logaddexp(0, -eta1) + pats[:, [1]] * -np.logaddexp(0, eta1)
              + pats[:, [2]] * -np.logaddexp(0, -eta0) + pats[:, [3]] * -np.logaddexp(0, eta0))
        return -(mult * special.logsumexp(ll + logw, axis=1)).sum()

    p1 = (y[x == 1].mean() if np.any(x == 1) else 0.5)
    p0 = (y[x == 0].mean() if np.any(x == 0) else 0.5)
    clip = lambda p: min(max(p, 0.01), 0.99)
    start = [special.logit(clip(p0)), special.logit(clip(p1)) - special.logit(clip(p0)), np.log(0.5)]
    res = optimize.minimize(nll, start, method="L-BFGS-B",
                            bounds=[(-15, 15), (-15, 15), (-12, 4)])
    return float(np.exp(res.x[2]))


def design_effect(m_bar: float, rho: float) -> float:
    return 1.0 + (m_bar - 1.0) * rho


def design_effect_inflate(se, m_bar: float, rho: float):
    """Inflate a standard error for clustering: ``se * sqrt(1 + (m_bar - 1) * rho)``."""
    if m_bar < 1:
        raise InputError(f"mean network size must be >= 1, got {m_bar}")
    if not 0.0 <= rho <= 1.0:
        raise InputError(f"rho must lie in [0, 1] for design-effect use, got {rho}")
    return se * np.sqrt(design_effect(m_bar, rho))


# -- network bootstrap ---------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapSpec:
    """Options for :func:`network_bootstrap`.

    ``ci_type`` is ``"percentile"`` or ``"wald_on_bootstrap_se"``.
    """

    replicates: int = 1000
    resample_units: str = "networks"
    resample_validation: bool = True
    seed: int = 20231
    ci_type: str = "percentile"
    max_failed_fraction: float = 0.20

    def __post_init__(self):
        if self.replicates < 2:
            raise InputError("at least 2 bootstrap replicates are required")
        if self.resample_units != "networks":
            raise InputError("only whole-network resampling is supported")
        if self.ci_type not in ("percentile", "wald_on_bootstrap_se"):
            raise InputError(f"unknown ci_type {self.ci_type!r}")


@dataclass(frozen=True)
class BootstrapResult:
    rd: EffectEstimate
    rr: EffectEstimate
    replicates_rd: np.ndarray
    replicates_rr: np.ndarray
    n_failed: int
    failed_fraction: float
    spec: BootstrapSpec
    estimator: str


def estimates_from_counts(main, val, estimator: str, fixed=None, tol=INVERTIBILITY_TOL):
    """Vectorised RD/RR over rows of summed counts; failures are NaN.

    ``main`` has columns (A, B, C, D), ``val`` the 8 validation columns.
    ``fixed`` overrides estimated parameters: ``(theta, phi)`` for the
    matrix method, a :class:`PredictiveValues` for the inverse-matrix method.
    """
    main = np.asarray(main, dtype=float)
    A, B, C, D = (main[..., i] for i in range(4))
    if estimator == "naive":
        a, b, c, d = A, B, C, D
    elif estimator == "matrix":
        if fixed is None:
            v = np.asarray(val, dtype=float).reshape(val.shape[:-1] + (2, 2, 2)).sum(axis=-3)
            n11, n01, n10, n00 = v[..., 0, 0], v[..., 0, 1], v[..., 1, 0], v[..., 1, 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = n11 / (n11 + n10)
                phi = n00 / (n01 + n00)
        else:
            theta, phi = fixed
        a, b, c, d = matrix_cells(A, B, C, D, theta, phi)
        bad = np.abs(theta + phi - 1) < tol
        a, b, c, d = (np.where(bad, np.nan, x) for x in (a, b, c, d))
    elif estimator == "inverse_matrix":
        if fixed is None:
            pv = predictive_values_from_counts(val)[:4]
        else:
            pv = fixed.as_tuple()
        a, b, c, d = inverse_cells(A, B, C, D, *pv)
    else:
        raise InputError(f"unknown estimator {estimator!r}")
    rd, rr = rd_rr(a, b, c, d)
    with np.errstate(invalid="ignore"):
        ok = (a > 0) & (b > 0) & (c >= 0) & (d >= 0) & np.isfinite(rd) & np.isfinite(rr)
    if estimator == "matrix":
        with np.errstate(invalid="ignore"):
            ok &= (c > 0) & (d > 0)
    return np.where(ok, rd, np.nan), np.where(ok, rr, np.nan)


def _replicate_weights(seed: int, indices, n_units: int):
    out = np.empty((len(indices), n_units), dtype=np.int64)
    for row, i in enumerate(indices):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(i),)))
        out[row] = np.bincount(rng.integers(0, n_units, size=n_units), minlength=n_units)
    return out


def network_bootstrap(data: EnrtData, spec: BootstrapSpec = BootstrapSpec(),
                      estimator: str = "matrix", fixed=None, workers: int = 1) -> BootstrapResult:
    """Whole-network bootstrap of a naive or corrected ASpE estimator.

    Each replicate ``i`` draws its network multiplicities from its own
    stream ``SeedSequence(seed, spawn_key=(i,))``, so the output depends only
    on ``(data, spec)``, never on ``workers``.  Validation members travel with
    their network; misclassification parameters are re-estimated per
    replicate unless ``spec.resample_validation`` is false, in which case the
    full-sample estimates (or ``fixed``) are reused.  Replicates where the
    estimator fails (matrix constraints, empty strata) are dropped and
    counted.
    """
    counts = network_counts(data)
    keep = counts.size > 0
    if keep.sum() < 2:
        raise InsufficientClusters("bootstrap needs at least 2 networks with members")
    main = counts.main[keep]
    val = counts.val[keep]
    K = main.shape[0]

    point_rd, point_rr = estimates_from_counts(main.sum(axis=0), val.sum(axis=0), estimator, fixed)
    if not (np.isfinite(point_rd) and np.isfinite(point_rr)):
        raise EstimationError(f"{estimator} estimator is not defined on the original data")
    if fixed is None and not spec.resample_validation and estimator != "naive":
        v = val.sum(axis=0)
        if estimator == "matrix":
            vt = v.reshape(2, 2, 2).sum(axis=0)
            fixed = (vt[0, 0] / (vt[0, 0] + vt[1, 0]), vt[1, 1] / (vt[0, 1] + vt[1, 1]))
        else:
            fixed = PredictiveValues(*(float(x) for x in predictive_values_from_counts(v)[:4]))

    idx = np.arange(spec.replicates)
    chunks = np.array_split(idx, max(1, min(workers, spec.replicates)))

    def run(chunk):
        w = _replicate_weights(spec.seed, chunk, K)
        return estimates_from_counts(w @ main, w @ val, estimator, fixed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    reps_rd = np.concatenate([p[0] for p in parts])
    reps_rr = np.concatenate([p[1] for p in parts])

    ok = np.isfinite(reps_rd) & np.isfinite(reps_rr)
    n_failed = int((~ok).sum())
    frac = n_failed / spec.replicates
    if frac > spec.max_failed_fraction:
        raise TooManyFailedReplicates(
            f"{n_failed} of {spec.replicates} bootstrap replicates failed ({frac:.1%}); "
            "no interval reported")
    good_rd = reps_rd[ok]
    good_lrr = np.log(reps_rr[ok])
    se_rd = float(np.std(good_rd, ddof=1))
    se_lrr = float(np.std(good_lrr, ddof=1))
    vm = "bootstrap"
    rd = EffectEstimate("RD", float(point_rd), estimator)
    rr = EffectEstimate("RR", float(point_rr), estimator)
    if spec.ci_type == "percentile":
        lo, hi = np.percentile(good_rd, [2.5, 97.5])
        rd = rd.with_ci(lo, hi, se_rd, vm)
        lo, hi = np.exp(np.percentile(good_lrr, [2.5, 97.5]))
        rr = rr.with_ci(lo, hi, se_lrr, vm)
    else:
        rd = rd.with_se(se_rd, vm)
        rr = rr.with_se(se_lrr, vm)
    return BootstrapResult(rd, rr, reps_rd, reps_rr, n_failed, frac, spec, estimator)


# -- convenience -------------------------------------------------------------------

def naive_with_se(table: FourfoldTable):
    """Naive RD/RR estimates with delta-method Wald intervals."""
    rd, rr = naive_aspe(table)
    dv = delta_variance(table, "naive")
    return rd.with_se(dv.se_rd, "delta"), rr.with_se(dv.se_log_rr, "delta")


def mean_members_per_network(data: EnrtData) -> float:
    size = np.bincount(data.network[data.member_mask], minlength=data.n_networks)
    size = size[size > 0]
    if size.size == 0:
        raise InsufficientClusters("no networks with members")
    return float(size.mean())




def bootstrap_se_from_counts(main, val, replicates: int, rng: np.random.Generator,
                             estimator: str = "matrix", fixed=None):
    """Network-bootstrap SEs of RD and log RR from per-network counts.

    A lighter variant of :func:`network_bootstrap` for simulation loops:
    one generator supplies all replicates.  Returns
    ``(se_rd, se_log_rr, n_failed)``; SEs are NaN if fewer than two
    replicates succeed.
    """
    main = np.asarray(main, dtype=float)
    val = np.asarray(val, dtype=float)
    K = main.shape[0]
    idx = rng.integers(0, K, size=(replicates, K))
    offs = (idx + K * np.arange(replicates)[:, None]).ravel()
    w = np.bincount(offs, minlength=replicates * K).reshape(replicates, K).astype(float)
    rd, rr = estimates_from_counts(w @ main, w @ val, estimator, fixed)
    ok = np.isfinite(rd) & np.isfinite(rr)
    if ok.sum() < 2:
        return np.nan, np.nan, int((~ok).sum())
    return (float(np.std(rd[ok], ddof=1)), float(np.std(np.log(rr[ok]), ddof=1)),
            int((~ok).sum()))


__all__ = [
    "BootstrapResult", "BootstrapSpec", "DeltaResult", "IccEstimate", "Z95",
    "delta_variance", "design_effect", "design_effect_inflate", "estimate_icc",
    "estimates_from_counts", "inverse_delta_var", "inverse_gradients", "latent_sigma_b2",
    "matrix_delta_var", "matrix_gradients", "naive_delta_var", "network_bootstrap",
    "numerical_gradient", "bootstrap_se_from_counts", "mean_members_per_network", "naive_with_se",
]
