"""Observed-data maximum likelihood with network random intercepts.

Each observed network ``k`` shares an intercept ``b_k ~ N(0, sigma_b2)``.
A member's outcome risk given true exposure ``g`` is

* RD scale: ``P_Y0 + delta_RD * g + b_k`` (linear risk model);
* RR scale: ``P_Y0 * delta_RR**g * exp(b_k)`` (log-binomial model).

True exposure is observed for validation members; for the others it is
summed out with ``Pr(G = g | G*)`` given by (PPV, NPV).  The validation
members contribute the factor ``PPV^n11 (1-PPV)^n01 NPV^n00 (1-NPV)^n10``
unless the predictive values are fixed externally.

The random-intercept integral is restricted to the values of ``b_k`` that
keep every risk inside (0, 1) and evaluated by Gauss-Legendre quadrature
on that interval (intersected with +/- ``tail_sd`` standard deviations).
Truncation is by zeroing: the density is not renormalised unless
``MleConfig.renormalize`` is set.  Because the interval endpoints move
smoothly with the parameters the log-likelihood is smooth, which the
quasi-Newton optimiser and the finite-difference information need.

Gradients use complex-step differentiation, exact to rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import InfeasibleParameters, InputError, NonConvergence, SingularInformation
from .model import EffectEstimate, EnrtData

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class MleConfig:
    """Settings for :func:`fit_mle`.

    Parameters
    ----------
    scale : {"RD", "RR"}
    quadrature_nodes : int
        Gauss-Legendre nodes over the feasible random-intercept interval.
    max_iterations : int
    gtol, ftol : float
        Projected-gradient and relative log-likelihood-change tolerances.
    start : {"from_naive", "user"}
        ``"user"`` takes ``user_start`` as natural-scale
        ``(p_y0, delta, sigma_b2, ppv, npv)``.
    fixed_ppv_npv : (float, float), optional
        External predictive values; the validation factor is then dropped.
    differential : bool
        Case-specific (PPV, NPV) pairs.  Sensitivity analysis only: the
        primary model is non-differential.
    renormalize : bool
        Divide each network integral by the retained normal mass.  The
        quadrature weights are always scaled so that they integrate the
        normal density exactly over the feasible interval.
    """

    scale: str = "RD"
    quadrature_nodes: int = 21
    max_iterations: int = 500
    gtol: float = 1e-6
    ftol: float = 1e-10
    start: str = "from_naive"
    user_start: Optional[tuple] = None
    fixed_ppv_npv: Optional[tuple] = None
    differential: bool = False
    renormalize: bool = False
    tail_sd: float = 7.0
    log_sigma2_bounds: tuple = (-20.0, 2.0)
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.scale not in ("RD", "RR"):
            raise InputError(f"scale must be 'RD' or 'RR', got {self.scale!r}")
        if self.quadrature_nodes < 5:
            raise InputError("quadrature_nodes must be at least 5")
        if self.gtol <= 0 or self.ftol <= 0:
            raise InputError("tolerances must be positive")
        if self.start not in ("from_naive", "user"):
            raise InputError(f"unknown start {self.start!r}")
        if self.start == "user" and self.user_start is None:
            raise InputError("start='user' requires user_start")
        if self.fixed_ppv_npv is not None and self.differential:
            raise InputError("differential predictive values cannot be combined with fixed_ppv_npv")


@dataclass(frozen=True)
class MleFit:
    """Result of :func:`fit_mle`.

    ``estimates``/``se`` are keyed by ``p_y0``, ``delta``, ``sigma_b2``,
    ``ppv``, ``npv`` (or ``ppv1``, ``npv1``, ``ppv0``, ``npv0`` for the
    differential variant).  ``se_log_delta`` is the SE of ``log(delta)`` on
    the RR scale.  ``truncated_mass`` is the normal mass outside the
    feasible interval, the same for every network.
    """

    scale: str
    estimates: dict
    se: dict
    se_log_delta: Optional[float]
    loglik: float
    converged: bool
    n_iterations: int
    boundary: bool
    information_pd: bool
    truncated_mass: float
    theta_hat: np.ndarray
    cov_transformed: np.ndarray
    trace: tuple = field(default=(), repr=False)
    message: str = ""

    @property
    def effect(self) -> EffectEstimate:
        est = EffectEstimate(self.scale, self.estimates["delta"], "mle")
        se = self.se["delta"] if self.scale == "RD" else self.se_log_delta
        return est.with_se(se, "observed_information")


# -- data compression ----------------------------------------------------------

@dataclass(frozen=True)
class _Packed:
    patterns: np.ndarray      # (R, 8) member-type counts per network pattern
    mult: np.ndarray          # (R,)
    val: np.ndarray           # (2, 4) validation counts by y (row 0: y=1): n11, n01, n10, n00
    n_empty: int


def _pack(data: EnrtData, use_validation: bool = True) -> _Packed:
    mem = data.member_mask
    net = data.network[mem]
    y = data.y[mem].astype(np.int64)
    gs = data.g_star[mem].astype(np.int64)
    v = (data.v[mem] == 1) if use_validation else np.zeros(mem.sum(), dtype=bool)
    g = np.where(v, data.g[mem], 0).astype(np.int64)
    # types 0..3: unvalidated (y, g*) ; 4..7: validated (y, g); value-1 first
    t = np.where(v, 4 + 2 * (1 - g) + (1 - y), 2 * (1 - gs) + (1 - y))
    K = data.n_networks
    cnt = np.bincount(net * 8 + t, minlength=8 * K).reshape(K, 8)
    nonempty = cnt.sum(axis=1) > 0
    pats, mult = np.unique(cnt[nonempty], axis=0, return_counts=True)
    val = np.zeros((2, 4))
    if v.any():
        for yy in (1, 0):
            sel = v & (y == yy)
            gg, ss = g[sel], gs[sel]
            val[1 - yy] = [np.sum((gg == 1) & (ss == 1)), np.sum((gg == 0) & (ss == 1)),
                           np.sum((gg == 1) & (ss == 0)), np.sum((gg == 0) & (ss == 0))]
    return _Packed(pats.astype(float), mult.astype(float), val, int((~nonempty).sum()))


# -- likelihood ----------------------------------------------------------------

def _expit(t):
    return 1.0 / (1.0 + np.exp(-t))


def _n_params(config: MleConfig) -> int:
    return 7 if config.differential else 5


def _unpack_params(omega, config: MleConfig):
    p0 = _expit(omega[0])
    p1 = _expit(omega[1])
    s2 = np.exp(omega[2])
    if config.fixed_ppv_npv is not None:
        ppv, npv = config.fixed_ppv_npv
        pv = (ppv, npv, ppv, npv)
    elif config.differential:
        pv = tuple(_expit(omega[3 + i]) for i in range(4))  # ppv1, npv1, ppv0, npv0
    else:
        ppv, npv = _expit(omega[3]), _expit(omega[4])
        pv = (ppv, npv, ppv, npv)
    return p0, p1, s2, pv


def _pick(a, b, larger: bool):
    """max/min chosen on real parts, keeping complex perturbations."""
    if (np.real(a) >= np.real(b)) == larger:
        return a
    return b


def _interval(p0, p1, sigma, config: MleConfig):
    c = config.tail_sd * sigma
    if config.scale == "RD":
        lo = _pick(-_pick(p0, p1, larger=False), -c, larger=True)
        hi = _pick(1 - _pick(p0, p1, larger=True), c, larger=False)
    else:
        lo = -c
        hi = _pick(-np.log(_pick(p0, p1, larger=True)), c, larger=False)
    if np.real(hi) <= np.real(lo):
        raise InfeasibleParameters("no random-intercept value keeps all risks inside (0, 1)")
    return lo, hi


def _normal_cdf(x):
    from scipy.special import ndtr

    return ndtr(x)  # complex-safe, keeps complex-step derivatives


def _loglik(omega, packed: _Packed, config: MleConfig, diagnostics: bool = False):
    p0, p1, s2, (ppv1, npv1, ppv0, npv0) = _unpack_params(omega, config)
    sigma = np.sqrt(s2)
    lo, hi = _interval(p0, p1, sigma, config)
    x, w = np.polynomial.legendre.leggauss(config.quadrature_nodes)
    half = 0.5 * (hi - lo)
    b = lo + half * (x + 1.0)
    logw = np.log(half * w) - 0.5 * (b / sigma) ** 2 - np.log(sigma) - _LOG_SQRT_2PI
    # rescale the weights to integrate the normal density exactly over
    # [lo, hi]; this removes the quadrature error of the weight function
    kept = _normal_cdf(hi / sigma) - _normal_cdf(lo / sigma)
    mw = np.max(np.real(logw))
    logw = logw - (mw + np.log(np.sum(np.exp(logw - mw))))
    if not config.renormalize:
        logw = logw + np.log(kept)
    if config.scale == "RD":
        r1 = p1 + b
        r0 = p0 + b
    else:
        eb = np.exp(b)
        r1 = p1 * eb
        r0 = p0 * eb
    # member terms at each node; rows follow the 8 member types of _pack
    terms = np.stack([
        ppv1 * r1 + (1 - ppv1) * r0,                    # y=1, g*=1
        ppv0 * (1 - r1) + (1 - ppv0) * (1 - r0),        # y=0, g*=1
        (1 - npv1) * r1 + npv1 * r0,                    # y=1, g*=0
        (1 - npv0) * (1 - r1) + npv0 * (1 - r0),        # y=0, g*=0
        r1, 1 - r1, r0, 1 - r0,                         # validated (y, g)
    ])
    logt = np.log(terms)                                # (8, J)
    s = packed.patterns @ logt + logw                   # (R, J)
    m = np.max(np.real(s), axis=1, keepdims=True)
    log_int = m[:, 0] + np.log(np.sum(np.exp(s - m), axis=1))
    ll = np.sum(packed.mult * log_int)
    if config.fixed_ppv_npv is None:
        for row, (pp, nn) in enumerate(((ppv1, npv1), (ppv0, npv0))):
            n11, n01, n10, n00 = packed.val[row]
            ll = ll + _xlogy(n11, pp) + _xlogy(n01, 1 - pp) + _xlogy(n00, nn) + _xlogy(n10, 1 - nn)
    if diagnostics:
        return ll, float(np.real(1.0 - kept))
    return ll


def _xlogy(n, p):
    return 0.0 if n == 0 else n * np.log(p)


def _grad(omega, packed, config, h=1e-30):
    omega = np.asarray(omega, dtype=float)
    g = np.empty_like(omega)
    for i in range(omega.size):
        z = omega.astype(complex)
        z[i] += 1j * h
        g[i] = np.imag(_loglik(z, packed, config)) / h
    return g


def log_likelihood(omega, data: EnrtData, config: MleConfig = MleConfig(),
                   gradient: bool = False):
    """Observed-data log-likelihood at transformed parameters ``omega``.

    ``omega = (logit p0, logit p1, log sigma_b2, logit PPV, logit NPV)``
    where ``p0 = P_Y0`` and ``p1`` is the exposed risk (``P_Y0 + delta_RD`` on
    the RD scale, ``P_Y0 * delta_RR`` on the RR scale).  The differential
    variant has ``(logit PPV1, logit NPV1, logit PPV0, logit NPV0)`` in the
    last four slots; with ``fixed_ppv_npv`` only the first three entries are
    used.

    Returns the log-likelihood, or ``(loglik, gradient)``.
    """
    omega = np.asarray(omega, dtype=float)
    if config.fixed_ppv_npv is None and omega.size != _n_params(config):
        raise InputError(f"omega must have {_n_params(config)} entries, got {omega.size}")
    packed = _pack(data, use_validation=True)
    ll = float(_loglik(omega, packed, config))
    if gradient:
        return ll, _grad(omega, packed, config)
    return ll


def to_transformed(p_y0, delta, sigma_b2, ppv=None, npv=None, scale="RD"):
    """Map natural-scale parameters to the optimiser's scale."""
    from scipy.special import logit

    p1 = p_y0 + delta if scale == "RD" else p_y0 * delta
    if not (0 < p_y0 < 1 and 0 < p1 < 1):
        raise InfeasibleParameters(f"risks must lie in (0, 1): p0={p_y0}, p1={p1}")
    out = [logit(p_y0), logit(p1), np.log(sigma_b2)]
    if ppv is not None:
        out += [logit(ppv), logit(npv)]
    return np.array(out, dtype=float)


# -- fitting -------------------------------------------------------------------

def _starting_values(data: EnrtData, packed: _Packed, config: MleConfig):
    from scipy.special import logit

    from .estimators import inverse_cells
    from .model import build_fourfold
    from .variance import estimate_icc

    clip = lambda p, lo=0.02, hi=0.98: float(min(max(p, lo), hi))
    if config.start == "user":
        p_y0, delta, s2, *pv = config.user_start
        p1 = p_y0 + delta if config.scale == "RD" else p_y0 * delta
        base = [logit(clip(p_y0, 1e-4, 1 - 1e-4)), logit(clip(p1, 1e-4, 1 - 1e-4)), np.log(s2)]
        if config.fixed_ppv_npv is None:
            pv = list(pv) if pv else [0.8, 0.8]
            if config.differential and len(pv) == 2:
                pv = pv * 2
            base += [logit(clip(p)) for p in pv]
        return np.array(base, dtype=float)

    if config.fixed_ppv_npv is not None:
        ppv, npv = config.fixed_ppv_npv
    else:
        v = packed.val.sum(axis=0)
        ppv = clip((v[0] + 0.5) / (v[0] + v[1] + 1))
        npv = clip((v[3] + 0.5) / (v[2] + v[3] + 1))
    t = build_fourfold(data, "observed")
    a, b, c, d = inverse_cells(t.a, t.b, t.c, t.d, ppv, npv, ppv, npv)
    p1 = a / (a + c) if a + c > 0 else 0.5
    p0 = b / (b + d) if b + d > 0 else 0.5
    p0, p1 = clip(p0), clip(p1)
    try:
        ic = estimate_icc(data)
        s2 = max(ic.sigma_b2, 1e-4)
    except Exception:
        s2 = 1e-2
    if config.scale == "RR":
        s2 = max(s2 / max(0.5 * (p0 + p1), 0.05) ** 2, 1e-4)
    s2 = min(s2, 0.5 * np.exp(config.log_sigma2_bounds[1]))
    base = [logit(p0), logit(p1), np.log(s2)]
    if config.fixed_ppv_npv is None:
        if config.differential:
            base += [logit(ppv), logit(npv)] * 2
        else:
            base += [logit(ppv), logit(npv)]
    return np.array(base, dtype=float)


def _natural(omega, config):
    p0, p1, s2, pv = _unpack_params(omega, config)
    delta = p1 - p0 if config.scale == "RD" else p1 / p0
    est = {"p_y0": float(p0), "delta": float(delta), "sigma_b2": float(s2)}
    names = ["ppv", "npv"] if not config.differential else ["ppv1", "npv1", "ppv0", "npv0"]
    vals = pv[:2] if not config.differential else pv
    for n, v_ in zip(names, vals):
        est[n] = float(v_)
    return est, names


def _jacobian(omega, config):
    """Rows: p_y0, delta, sigma_b2, predictive values...; plus log-delta row."""
    n = omega.size
    p0 = _expit(omega[0])
    p1 = _expit(omega[1])
    J = np.zeros((n, n))
    J[0, 0] = p0 * (1 - p0)
    if config.scale == "RD":
        J[1, 0], J[1, 1] = -p0 * (1 - p0), p1 * (1 - p1)
    else:
        d = p1 / p0
        J[1, 0], J[1, 1] = -d * (1 - p0), d * (1 - p1)
    J[2, 2] = np.exp(omega[2])
    for i in range(3, n):
        q = _expit(omega[i])
        J[i, i] = q * (1 - q)
    log_delta_row = np.zeros(n)
    log_delta_row[0], log_delta_row[1] = -(1 - p0), 1 - p1
    return J, log_delta_row


def fit_mle(data: EnrtData, config: MleConfig = MleConfig()) -> MleFit:
    """Maximise the observed-data likelihood and report observed-information SEs.

    Raises
    ------
    InputError
        No validation members and no fixed predictive values.
    NonConvergence
        The optimiser fails from the start and all jittered restarts.
    SingularInformation
        The observed information is not positive definite at the optimum.
    """
    packed = _pack(data, use_validation=True)
    if config.fixed_ppv_npv is None and packed.val.sum() == 0:
        raise InputError("MLE needs validation members (v=1) or fixed_ppv_npv")
    x0 = _starting_values(data, packed, config)
    n = x0.size
    bounds = [(-15.0, 15.0)] * n
    bounds[2] = config.log_sigma2_bounds

    def f(x):
        return -float(_loglik(x, packed, config))

    def jac(x):
        return -_grad(x, packed, config)

    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
    best = None
    trace = []
    starts = [x0] + [x0 + rng.normal(0.0, 0.3, size=n) for _ in range(config.restarts)]
    for attempt, start in enumerate(starts):
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        tr = [-f(start)]
        try:
            res = optimize.minimize(
                f, start, jac=jac, method="L-BFGS-B", bounds=bounds,
                callback=lambda xk: tr.append(-f(xk)),
                options={"maxiter": config.max_iterations, "gtol": config.gtol,
                         "ftol": config.ftol})
        except InfeasibleParameters:
            continue
        if best is None or res.fun < best.fun:
            best, trace = res, tr
        if res.success:
            break
    if best is None or not best.success:
        msg = "optimiser did not start" if best is None else str(best.message)
        raise NonConvergence(f"MLE did not converge after {len(starts)} starts: {msg}")

    xh = best.x
    boundary = bool(xh[2] <= config.log_sigma2_bounds[0] + 1e-3 or xh[2] >= config.log_sigma2_bounds[1] - 1e-3)
    # observed information by central differences of the gradient
    H = np.empty((n, n))
    for i in range(n):
        h = 1e-5 * max(1.0, abs(xh[i]))
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (jac(xh + e) - jac(xh - e)) / (2 * h)
    H = 0.5 * (H + H.T)
    free = np.arange(n) if not boundary else np.array([i for i in range(n) if i != 2])
    Hf = H[np.ix_(free, free)]
    try:
        np.linalg.cholesky(Hf)
        pd = True
    except np.linalg.LinAlgError:
        pd = False
    if not pd:
        raise SingularInformation("observed information is not positive definite at the optimum")
    cov = np.full((n, n), np.nan)
    cov[np.ix_(free, free)] = np.linalg.inv(Hf)
    if boundary:
        cov[2, :] = cov[:, 2] = 0.0
        cov[2, 2] = np.nan
    J, ld = _jacobian(xh, config)
    cov0 = np.nan_to_num(cov, nan=0.0)
    cov_nat = J @ cov0 @ J.T
    est, names = _natural(xh, config)
    keys = ["p_y0", "delta", "sigma_b2"] + names
    # externally fixed predictive values are constants, not parameters
    se = {k: float(np.sqrt(max(cov_nat[i, i], 0.0))) if i < n else 0.0
          for i, k in enumerate(keys)}
    if boundary:
        se["sigma_b2"] = float("nan")
    se_ld = float(np.sqrt(max(ld @ cov0 @ ld, 0.0))) if config.scale == "RR" else None
    ll, trunc = _loglik(xh, packed, config, diagnostics=True)
    return MleFit(scale=config.scale, estimates=est, se=se, se_log_delta=se_ld,
                  loglik=float(ll), converged=True, n_iterations=int(best.nit),
                  boundary=boundary, information_pd=pd, truncated_mass=trunc,
                  theta_hat=xh, cov_transformed=cov, trace=tuple(trace),
                  message=str(best.message))


__all__ = ["MleConfig", "MleFit", "fit_mle", "log_likelihood", "to_transformed"]
