"""Simulation engine for ENRTs with network misclassification.

A replicate draws ``K`` networks (one index plus ``n_k`` members each),
randomises the indexes with probability ``P_R``, records each member in the
true network with probability ``P_M`` and otherwise in a uniformly chosen
other network, and draws binary member outcomes, optionally correlated
within the true network.  A random subset of members is flagged as the
internal validation sample (true network known).

Every replicate uses four independent streams seeded by
``SeedSequence(seed, spawn_key=(replicate, purpose))`` for arms,
misclassification, outcomes and validation selection, plus a fifth for
the within-replicate bootstrap.  Replicates are analysed independently and
aggregated in replicate order, so results do not depend on the number of
worker processes.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import product
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from .errors import EnrtError, InputError, InvalidScenario
from .estimators import (
    BiasReport,
    analytic_bias,
    inverse_cells,
    matrix_cells,
    predictive_values_from_counts,
    predictive_values_from_model,
    rd_rr,
    theta_phi_from_pm,
)
from .model import Z95, EnrtData
from .variance import (
    _anova_icc,
    bootstrap_se_from_counts,
    inverse_delta_var,
    matrix_delta_var,
    naive_delta_var,
)

SIGMA_E2 = 3.29
ARMS, MISCLASS, OUTCOME, VALIDATION, BOOTSTRAP = range(5)
HPTN_VALIDATION_FRACTION = 38 / 269

ESTIMATORS = ("naive", "true_exposure", "matrix_known", "matrix_est", "inverse_known", "inverse_est")


# -- scenario ------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario.

    Parameters
    ----------
    p_m, p_y0, rr, p_r : float
        Correct-classification probability, unexposed risk, risk ratio and
        allocation probability.  ``p_y0 * rr`` must not exceed 1.
    icc : float
        Latent-scale intracluster correlation of member outcomes within
        true networks; ``0`` gives independent outcomes.
    k, n_k : int
        Networks and members per network.
    reps : int
    seed : int
    validation_fraction : float
        Share of members in the internal validation sample (rounded to a
        whole count).  Ignored when ``validation_size`` is given.
    outcome_model : {"calibrated", "literal"}
        ``"calibrated"`` solves logit intercept and slope so that marginal
        risks equal ``p_y0`` and ``p_y0 * rr``; ``"literal"`` uses
        ``expit(p_y0 + rr * G + b)`` verbatim (compatibility only).
    bootstrap_reps : int
        Network-bootstrap replicates inside each simulated trial (0: off).
    member_counts : tuple of int, optional
        Members per network when sizes differ; overrides ``n_k`` and must
        have ``k`` entries.
    """

    p_m: float
    p_y0: float
    rr: float
    p_r: float
    icc: float = 0.0
    k: int = 1000
    n_k: int = 3
    reps: int = 2000
    seed: int = 2023
    validation_fraction: float = HPTN_VALIDATION_FRACTION
    validation_size: Optional[int] = None
    outcome_model: str = "calibrated"
    bootstrap_reps: int = 0
    member_counts: Optional[tuple] = None

    def __post_init__(self):
        for name in ("p_m", "p_y0", "p_r", "validation_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidScenario(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.p_y0 < 1.0:
            raise InvalidScenario(f"p_y0 must lie in (0, 1), got {self.p_y0}")
        if not 0.0 < self.p_r < 1.0:
            raise InvalidScenario(f"p_r must lie in (0, 1), got {self.p_r}")
        if self.rr <= 0:
            raise InvalidScenario(f"rr must be positive, got {self.rr}")
        if self.p_y0 * self.rr > 1.0 + 1e-12:
            raise InvalidScenario(f"p_y0 * rr = {self.p_y0 * self.rr:g} exceeds 1")
        if not 0.0 <= self.icc < 1.0:
            raise InvalidScenario(f"icc must lie in [0, 1), got {self.icc}")
        if self.k < 2 or self.n_k < 1 or self.reps < 1:
            raise InvalidScenario("need k >= 2, n_k >= 1 and reps >= 1")
        if self.member_counts is not None:
            if len(self.member_counts) != self.k or min(self.member_counts) < 1:
                raise InvalidScenario("member_counts needs k positive entries")
        if self.validation_size is not None and not 0 <= self.validation_size <= self.n_members:
            raise InvalidScenario("validation_size must lie between 0 and the number of members")
        if self.outcome_model not in ("calibrated", "literal"):
            raise InvalidScenario(f"unknown outcome_model {self.outcome_model!r}")
        if self.bootstrap_reps < 0:
            raise InvalidScenario("bootstrap_reps must be non-negative")

    @property
    def true_rd(self) -> float:
        return self.p_y0 * (self.rr - 1.0)

    @property
    def theta_phi(self):
        return theta_phi_from_pm(self.p_m, self.p_r)

    @property
    def sigma_b2(self) -> float:
        return SIGMA_E2 * self.icc / (1.0 - self.icc)

    @property
    def sizes(self) -> np.ndarray:
        if self.member_counts is not None:
            return np.asarray(self.member_counts, dtype=np.int64)
        return np.full(self.k, self.n_k, dtype=np.int64)

    @property
    def n_members(self) -> int:
        return int(self.sizes.sum())

    @property
    def n_validation(self) -> int:
        if self.validation_size is not None:
            return int(self.validation_size)
        return int(round(self.validation_fraction * self.n_members))

    def label(self) -> str:
        return (f"p_m={self.p_m:g} p_y0={self.p_y0:g} rr={self.rr:g} p_r={self.p_r:g} "
                f"icc={self.icc:g}")


def scenario_is_valid(p_y0: float, rr: float) -> bool:
    return p_y0 * rr <= 1.0 + 1e-12


def _stream(seed: int, rep: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(rep), purpose)))


# -- outcome model -------------------------------------------------------------

@lru_cache(maxsize=4096)
def logit_intercept(p: float, sigma2: float, nodes: int = 60) -> float:
    """Intercept ``eta`` with ``E[expit(eta + b)] = p`` for ``b ~ N(0, sigma2)``."""
    if sigma2 <= 0:
        return float(special.logit(p))
    x, w = np.polynomial.hermite.hermgauss(nodes)
    b = np.sqrt(2.0 * sigma2) * x
    w = w / np.sqrt(np.pi)
    f = lambda eta: float(np.dot(w, special.expit(eta + b))) - p
    return float(optimize.brentq(f, -50.0, 50.0, xtol=1e-14))


def marginal_risk(eta: float, sigma2: float, nodes: int = 60) -> float:
    """``E[expit(eta + b)]`` for ``b ~ N(0, sigma2)``."""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return float(np.dot(w / np.sqrt(np.pi), special.expit(eta + np.sqrt(2.0 * sigma2) * x)))


def _member_risk(spec: ScenarioSpec, g, b):
    """Outcome probability for members with true exposure ``g`` and intercepts ``b``."""
    if spec.outcome_model == "literal":
        return special.expit(spec.p_y0 + spec.rr * g + b)
    if spec.icc == 0:
        return spec.p_y0 * np.where(g == 1, spec.rr, 1.0)
    p1 = spec.p_y0 * spec.rr
    eta0 = logit_intercept(spec.p_y0, spec.sigma_b2)
    if p1 >= 1.0:
        return np.where(g == 1, 1.0, special.expit(eta0 + b))
    eta1 = logit_intercept(p1, spec.sigma_b2)
    return special.expit(np.where(g == 1, eta1, eta0) + b)


def hptn_like_spec(reps: int = 200, seed: int = 2023, validation_size: int = 38,
                   icc: float = 0.16, p_y0: float = 0.55, rr: float = 0.30, **kw) -> ScenarioSpec:
    """A trial shaped like the HPTN 037 Philadelphia analysis sample.

    184 networks with 269 members (85 networks of two, 99 of one),
    misclassification giving theta = 0.60 and phi = 0.79
    (``P_M = 0.39``, ``P_R = 0.21 / 0.61``), 38 validation members and
    outcome parameters whose attenuated risk difference is about -0.15.
    """
    p_m = 0.60 + 0.79 - 1.0
    p_r = (0.60 - p_m) / (1.0 - p_m)
    sizes = (2,) * 85 + (1,) * 99
    return ScenarioSpec(p_m=p_m, p_y0=p_y0, rr=rr, p_r=p_r, icc=icc, k=len(sizes), n_k=1,
                        reps=reps, seed=seed, validation_size=validation_size,
                        member_counts=sizes, **kw)


# -- data generation -----------------------------------------------------------

@dataclass(frozen=True)
class SimArrays:
    """Member-level arrays of one simulated trial (indexes kept separately)."""

    arm: np.ndarray           # (K,) network arms
    true_net: np.ndarray      # (M,) true network of each member
    obs_net: np.ndarray       # (M,) recorded network
    g: np.ndarray
    g_star: np.ndarray
    y: np.ndarray
    v: np.ndarray
    y_index: np.ndarray       # (K,) index outcomes


def simulate_arrays(spec: ScenarioSpec, replicate: int) -> SimArrays:
    K = spec.k
    true_net = np.repeat(np.arange(K), spec.sizes)
    M = true_net.size
    arm = (_stream(spec.seed, replicate, ARMS).random(K) < spec.p_r).astype(np.int8)
    rng = _stream(spec.seed, replicate, MISCLASS)
    wrong = rng.random(M) >= spec.p_m
    u = rng.integers(0, K - 1, size=M)
    other = u + (u >= true_net)               # uniform over the other K-1 networks
    obs_net = np.where(wrong, other, true_net)
    g = arm[true_net]
    g_star = arm[obs_net]
    rng = _stream(spec.seed, replicate, OUTCOME)
    b = rng.normal(0.0, np.sqrt(spec.sigma_b2), size=K) if spec.icc > 0 else np.zeros(K)
    risk = _member_risk(spec, g, b[true_net])
    y = (rng.random(M) < risk).astype(np.int8)
    y_index = (rng.random(K) < spec.p_y0).astype(np.int8)
    v = np.zeros(M, dtype=np.int8)
    nv = spec.n_validation
    if nv > 0:
        v[_stream(spec.seed, replicate, VALIDATION).choice(M, size=nv, replace=False)] = 1
    return SimArrays(arm, true_net, obs_net, g.astype(np.int8), g_star.astype(np.int8), y, v, y_index)


def generate_dataset(spec: ScenarioSpec, replicate_index: int = 0) -> EnrtData:
    """One simulated trial as validated :class:`EnrtData` (indexes first).

    ``true_network`` and ``g`` are filled for every member as simulation
    oracles (true-exposure tables, true-network ICC); the estimators read
    ``g`` only where ``v == 1``, and :func:`~enrtspill.model.write_csv`
    output carries whatever the dataset holds.  Use ``.records()`` for
    :class:`~enrtspill.model.EnrtRecord` rows.
    """
    s = simulate_arrays(spec, replicate_index)
    K = spec.k
    M = s.y.size
    network = np.concatenate([np.arange(K), s.obs_net])
    is_index = np.concatenate([np.ones(K, dtype=np.int8), np.zeros(M, dtype=np.int8)])
    g_star = np.concatenate([np.zeros(K, dtype=np.int8), s.g_star])
    y = np.concatenate([s.y_index, s.y])
    v = np.concatenate([np.zeros(K, dtype=np.int8), s.v])
    g = np.concatenate([np.zeros(K, dtype=np.int8), s.g])
    true_network = np.concatenate([np.arange(K), s.true_net])
    return EnrtData.from_arrays(network=network, network_arm=s.arm, is_index=is_index,
                                g_star=g_star, y=y, v=v, g=g, true_network=true_network,
                                allocation_prob=spec.p_r)


# -- per-replicate analysis ----------------------------------------------------

def _metric_names():
    names = []
    for e in ESTIMATORS:
        names += [f"{e}_rd", f"{e}_rr", f"{e}_var_rd", f"{e}_var_lrr"]
        if e.endswith("_est"):
            names += [f"{e}_kvar_rd", f"{e}_kvar_lrr"]
    names += ["matrix_known_boot_rd", "matrix_known_boot_lrr",
              "matrix_est_boot_rd", "matrix_est_boot_lrr",
              "icc_obs", "m_bar", "theta_hat", "phi_hat"]
    return tuple(names)


METRICS = _metric_names()
_IDX = {n: i for i, n in enumerate(METRICS)}


def _valid_cells(a, b, c, d, strict=True):
    if strict:
        return a > 0 and b > 0 and c > 0 and d > 0
    return a > 0 and b > 0 and c >= 0 and d >= 0


def analyze_replicate(spec: ScenarioSpec, s: SimArrays, replicate: int) -> np.ndarray:
    """Vector of per-replicate metrics (see ``METRICS``); failures are NaN."""
    out = np.full(len(METRICS), np.nan)
    put = lambda name, val: out.__setitem__(_IDX[name], val)
    K = spec.k
    y = s.y.astype(np.int64)
    gs = s.g_star.astype(np.int64)
    g = s.g.astype(np.int64)
    cells = np.bincount(2 * (1 - y) + (1 - gs), minlength=4).astype(float)
    tcells = np.bincount(2 * (1 - y) + (1 - g), minlength=4).astype(float)
    vm = s.v == 1
    val8 = np.bincount(4 * (1 - y[vm]) + 2 * (1 - gs[vm]) + (1 - g[vm]), minlength=8).astype(float)
    A, B, C, D = cells

    with np.errstate(divide="ignore", invalid="ignore"):
        for name, (a, b, c, d) in (("naive", cells), ("true_exposure", tcells)):
            if _valid_cells(a, b, c, d, strict=False):
                rd, rr = rd_rr(a, b, c, d)
                vrd, vlrr = naive_delta_var(a, b, c, d)
                put(f"{name}_rd", rd), put(f"{name}_rr", rr)
                put(f"{name}_var_rd", vrd), put(f"{name}_var_lrr", vlrr)

        theta, phi = spec.theta_phi
        vt = val8.reshape(2, 2, 2).sum(axis=0)
        n1_, n0_ = vt[0, 0] + vt[1, 0], vt[0, 1] + vt[1, 1]
        th_hat = vt[0, 0] / n1_ if n1_ > 0 else np.nan
        ph_hat = vt[1, 1] / n0_ if n0_ > 0 else np.nan
        put("theta_hat", th_hat), put("phi_hat", ph_hat)

        for name, th, ph in (("matrix_known", theta, phi), ("matrix_est", th_hat, ph_hat)):
            if not (np.isfinite(th) and np.isfinite(ph)) or abs(th + ph - 1) < 1e-6:
                continue
            a, b, c, d = matrix_cells(A, B, C, D, th, ph)
            if not _valid_cells(a, b, c, d):
                continue
            rd, rr = rd_rr(a, b, c, d)
            put(f"{name}_rd", rd), put(f"{name}_rr", rr)
            kv = matrix_delta_var(A, B, C, D, th, ph)
            if name == "matrix_known":
                put("matrix_known_var_rd", kv[0]), put("matrix_known_var_lrr", kv[1])
            else:
                ev = matrix_delta_var(A, B, C, D, th, ph, th * (1 - th) / n1_, ph * (1 - ph) / n0_)
                put("matrix_est_var_rd", ev[0]), put("matrix_est_var_lrr", ev[1])
                put("matrix_est_kvar_rd", kv[0]), put("matrix_est_kvar_lrr", kv[1])

        oracle = predictive_values_from_model(theta, phi, spec.p_y0 * spec.rr, spec.p_y0, spec.p_r) \
            if spec.p_y0 * spec.rr < 1 else None
        est = predictive_values_from_counts(val8)
        for name, pv, dens in (
                ("inverse_known", None if oracle is None else oracle.as_tuple(), None),
                ("inverse_est", est[:4], est[4:])):
            if pv is None or not np.all(np.isfinite(pv)):
                continue
            a, b, c, d = inverse_cells(A, B, C, D, *pv)
            if not _valid_cells(a, b, c, d, strict=False):
                continue
            rd, rr = rd_rr(a, b, c, d)
            put(f"{name}_rd", rd), put(f"{name}_rr", rr)
            kv = inverse_delta_var(A, B, C, D, *pv)
            if dens is None:
                put(f"{name}_var_rd", kv[0]), put(f"{name}_var_lrr", kv[1])
            else:
                pvar = tuple(p * (1 - p) / n for p, n in zip(pv, dens))
                ev = inverse_delta_var(A, B, C, D, *pv, param_vars=pvar)
                put(f"{name}_var_rd", ev[0]), put(f"{name}_var_lrr", ev[1])
                put(f"{name}_kvar_rd", kv[0]), put(f"{name}_kvar_lrr", kv[1])

    # clustering: ANOVA ICC on the recorded networks
    size = np.bincount(s.obs_net, minlength=K).astype(float)
    ysum = np.bincount(s.obs_net, weights=s.y.astype(float), minlength=K)
    try:
        rho, *_, m_bar = _anova_icc(ysum, ysum, size, s.arm)
        put("icc_obs", max(rho, 0.0)), put("m_bar", m_bar)
    except EnrtError:
        pass

    if spec.bootstrap_reps > 0:
        main_k = np.bincount(s.obs_net * 4 + 2 * (1 - y) + (1 - gs), minlength=4 * K).reshape(K, 4)
        on = s.obs_net[vm]
        val_k = np.bincount(on * 8 + 4 * (1 - y[vm]) + 2 * (1 - gs[vm]) + (1 - g[vm]),
                            minlength=8 * K).reshape(K, 8)
        keep = size > 0
        main_k, val_k = main_k[keep], val_k[keep]
        rng = _stream(spec.seed, replicate, BOOTSTRAP)
        if np.isfinite(out[_IDX["matrix_known_rd"]]):
            se_rd, se_lrr, _ = bootstrap_se_from_counts(main_k, val_k, spec.bootstrap_reps, rng,
                                                        "matrix", fixed=(theta, phi))
            put("matrix_known_boot_rd", se_rd), put("matrix_known_boot_lrr", se_lrr)
        if np.isfinite(out[_IDX["matrix_est_rd"]]):
            se_rd, se_lrr, _ = bootstrap_se_from_counts(main_k, val_k, spec.bootstrap_reps, rng,
                                                        "matrix")
            put("matrix_est_boot_rd", se_rd), put("matrix_est_boot_lrr", se_lrr)
    return out


def _run_chunk(spec: ScenarioSpec, reps: Sequence[int]) -> np.ndarray:
    return np.vstack([analyze_replicate(spec, simulate_arrays(spec, r), r) for r in reps])


def simulate_replicates(spec: ScenarioSpec, workers: int = 1) -> np.ndarray:
    """``(reps, len(METRICS))`` matrix of per-replicate metrics in replicate order."""
    reps = np.arange(spec.reps)
    if workers <= 1:
        return _run_chunk(spec, reps)
    chunks = [c for c in np.array_split(reps, workers * 4) if c.size]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [spec] * len(chunks), chunks))
    return np.vstack(parts)


# -- aggregation ---------------------------------------------------------------

def _mean(x):
    return math.fsum(x) / len(x) if len(x) else float("nan")


def _sd(x):
    if len(x) < 2:
        return float("nan")
    m = _mean(x)
    return math.sqrt(math.fsum((xi - m) ** 2 for xi in x) / (len(x) - 1))


@dataclass(frozen=True)
class EstimatorSummary:
    """Monte Carlo summary of one estimator in one scenario.

    ``*_se_*`` fields: ``emp`` is the empirical SD over replicates, ``mc``
    the Monte Carlo SE of the mean, ``model`` the mean delta-method SE,
    ``model_known`` the same ignoring validation error, ``de`` the mean
    design-effect-inflated SE, ``boot`` the mean within-replicate bootstrap
    SE.  RR spreads are on the log scale except ``mc_se_rr``, which belongs
    to ``mean_rr``.
    """

    n_ok: int
    failure_rate: float
    mean_rd: float
    emp_se_rd: float
    mc_se_rd: float
    model_se_rd: float
    model_known_se_rd: float
    de_se_rd: float
    boot_se_rd: float
    coverage_rd: float
    coverage_rd_de: float
    mean_rr: float
    mc_se_rr: float
    mean_lrr: float
    mc_se_lrr: float
    emp_se_lrr: float
    model_se_lrr: float
    model_known_se_lrr: float
    de_se_lrr: float
    boot_se_lrr: float
    coverage_rr: float
    coverage_rr_de: float


def _summarize(M: np.ndarray, name: str, spec: ScenarioSpec) -> EstimatorSummary:
    col = lambda m: M[:, _IDX[m]] if m in _IDX else np.full(M.shape[0], np.nan)
    rd, rr = col(f"{name}_rd"), col(f"{name}_rr")
    ok = np.isfinite(rd) & np.isfinite(rr) & (rr > 0)
    n = int(ok.sum())
    vrd, vlrr = col(f"{name}_var_rd")[ok], col(f"{name}_var_lrr")[ok]
    kvrd = col(f"{name}_kvar_rd")[ok] if f"{name}_kvar_rd" in _IDX else vrd
    kvlrr = col(f"{name}_kvar_lrr")[ok] if f"{name}_kvar_lrr" in _IDX else vlrr
    de = 1.0 + (col("m_bar")[ok] - 1.0) * col("icc_obs")[ok]
    r, lr = rd[ok], np.log(rr[ok])
    se, sel = np.sqrt(vrd), np.sqrt(vlrr)
    sede, selde = se * np.sqrt(de), sel * np.sqrt(de)
    true_rd, true_lrr = spec.true_rd, math.log(spec.rr)

    def cov(est, s, truth):
        good = np.isfinite(s)
        return _mean(list((np.abs(est[good] - truth) <= Z95 * s[good]).astype(float))) if good.any() \
            else float("nan")

    def mean_f(x):
        x = x[np.isfinite(x)]
        return _mean(list(x))

    boot_rd = col(f"{name}_boot_rd")[ok] if f"{name}_boot_rd" in _IDX else np.full(n, np.nan)
    boot_lrr = col(f"{name}_boot_lrr")[ok] if f"{name}_boot_lrr" in _IDX else np.full(n, np.nan)
    return EstimatorSummary(
        n_ok=n, failure_rate=1.0 - n / M.shape[0],
        mean_rd=_mean(list(r)), emp_se_rd=_sd(list(r)), mc_se_rd=_sd(list(r)) / math.sqrt(max(n, 1)),
        model_se_rd=mean_f(se), model_known_se_rd=mean_f(np.sqrt(kvrd)), de_se_rd=mean_f(sede),
        boot_se_rd=mean_f(boot_rd), coverage_rd=cov(r, se, true_rd),
        coverage_rd_de=cov(r, sede, true_rd),
        mean_rr=_mean(list(rr[ok])), mc_se_rr=_sd(list(rr[ok])) / math.sqrt(max(n, 1)),
        mean_lrr=_mean(list(lr)), mc_se_lrr=_sd(list(lr)) / math.sqrt(max(n, 1)),
        emp_se_lrr=_sd(list(lr)), model_se_lrr=mean_f(sel), model_known_se_lrr=mean_f(np.sqrt(kvlrr)),
        de_se_lrr=mean_f(selde), boot_se_lrr=mean_f(boot_lrr), coverage_rr=cov(lr, sel, true_lrr),
        coverage_rr_de=cov(lr, selde, true_lrr))


@dataclass(frozen=True)
class ScenarioResult:
    """Aggregated simulation output for one scenario.

    ``runtime`` is wall-clock seconds and is left out of :meth:`as_row` so
    that machine output is reproducible byte for byte.
    """

    spec: ScenarioSpec
    analytic: BiasReport
    estimators: dict
    mean_icc_obs: float
    mean_theta_hat: float
    mean_phi_hat: float
    runtime: float = field(default=0.0, compare=False)
    replicates: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def naive_bias(self, scale: str = "RD"):
        """Empirical mean naive estimate minus truth, with its Monte Carlo SE."""
        s = self.estimators["naive"]
        if scale == "RD":
            return s.mean_rd - self.spec.true_rd, s.mc_se_rd
        return s.mean_rr - self.spec.rr, s.mc_se_rr

    def as_row(self) -> dict:
        row = {k: v for k, v in asdict(self.spec).items()}
        row.update({"true_rd": self.spec.true_rd, "true_rr": self.spec.rr,
                    "analytic_rd_star": self.analytic.delta_rd_star,
                    "analytic_rr_star": self.analytic.delta_rr_star,
                    "analytic_bias_rd": self.analytic.bias_rd,
                    "analytic_bias_rr": self.analytic.bias_rr,
                    "analytic_rel_bias_rd": self.analytic.rel_bias_rd,
                    "analytic_rel_bias_rr": self.analytic.rel_bias_rr,
                    "mean_icc_obs": self.mean_icc_obs, "mean_theta_hat": self.mean_theta_hat,
                    "mean_phi_hat": self.mean_phi_hat})
        for e, s in self.estimators.items():
            for k, v in asdict(s).items():
                row[f"{e}.{k}"] = v
        return row


def run_scenario(spec: ScenarioSpec, workers: int = 1, keep_replicates: bool = False) -> ScenarioResult:
    """Simulate ``spec.reps`` trials and summarise every estimator."""
    t0 = time.perf_counter()
    M = simulate_replicates(spec, workers)
    est = {e: _summarize(M, e, spec) for e in ESTIMATORS}
    colmean = lambda n: _mean([x for x in M[:, _IDX[n]] if np.isfinite(x)])
    rep = analytic_bias(spec.p_y0, spec.rr, spec.p_m, spec.p_r)
    return ScenarioResult(spec, rep, est, colmean("icc_obs"), colmean("theta_hat"), colmean("phi_hat"),
                          runtime=time.perf_counter() - t0, replicates=M if keep_replicates else None)


# -- grids ---------------------------------------------------------------------

PAPER_GRID = {
    "p_m": [0.1, 0.25, 0.5, 0.75, 0.9],
    "p_y0": [0.1, 0.25, 0.5, 0.75, 0.9],
    "rr": [0.25, 0.75, 1.25, 3, 5],
    "p_r": [0.2, 0.5, 0.8],
    "icc": [0.0],
    "k": 1000, "n_k": 3, "reps": 2000, "seed": 2023,
}


@dataclass(frozen=True)
class GridSpec:
    """Cross-product of scenario parameters (JSON keys as in ``PAPER_GRID``).

    ``k_scale``/``reps_scale`` shrink network count and replications for
    desk-scale runs; the grid itself is unchanged.
    """

    p_m: tuple
    p_y0: tuple
    rr: tuple
    p_r: tuple
    icc: tuple = (0.0,)
    k: int = 1000
    n_k: int = 3
    reps: int = 2000
    seed: int = 2023
    k_scale: float = 1.0
    reps_scale: float = 1.0
    validation_fraction: float = HPTN_VALIDATION_FRACTION
    bootstrap_reps: int = 0
    member_counts: Optional[tuple] = None

    def __post_init__(self):
        for name in ("p_m", "p_y0", "rr", "p_r", "icc"):
            if len(getattr(self, name)) == 0:
                raise InputError(f"grid list {name!r} is empty")
        if self.k_scale <= 0 or self.reps_scale <= 0:
            raise InputError("scale factors must be positive")

    @classmethod
    def from_dict(cls, cfg: dict, **overrides) -> "GridSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - known
        if unknown:
            raise InputError(f"unknown grid config keys: {sorted(unknown)}")
        missing = [k for k in ("p_m", "p_y0", "rr", "p_r") if k not in cfg]
        if missing:
            raise InputError(f"grid config missing keys: {missing}")
        args = dict(cfg)
        for key in ("p_m", "p_y0", "rr", "p_r", "icc"):
            if key in args:
                val = args[key]
                args[key] = tuple(float(x) for x in (val if isinstance(val, (list, tuple)) else [val]))
        for key in ("k", "n_k", "reps", "seed", "bootstrap_reps"):
            if key in args:
                args[key] = int(args[key])
        args.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**args)

    @classmethod
    def from_json(cls, path, **overrides) -> "GridSpec":
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise InputError(f"{path}: grid config must be a JSON object")
        return cls.from_dict(cfg, **overrides)

    def scenarios(self):
        """``(valid_specs, excluded)``; excluded entries are parameter dicts with ``p_y0 * rr > 1``."""
        k = max(2, int(round(self.k * self.k_scale)))
        reps = max(2, int(round(self.reps * self.reps_scale)))
        valid, excluded = [], []
        for i, (pm, py0, rr, pr, icc) in enumerate(product(self.p_m, self.p_y0, self.rr, self.p_r, self.icc)):
            if not scenario_is_valid(py0, rr):
                excluded.append({"p_m": pm, "p_y0": py0, "rr": rr, "p_r": pr, "icc": icc})
                continue
            seed = int(np.random.SeedSequence([self.seed, i]).generate_state(1, np.uint64)[0] >> 1)
            valid.append(ScenarioSpec(pm, py0, rr, pr, icc, k, self.n_k, reps, seed,
                                      validation_fraction=self.validation_fraction,
                                      bootstrap_reps=self.bootstrap_reps))
        return valid, excluded


@dataclass(frozen=True)
class GridResult:
    results: tuple
    excluded: tuple
    errors: tuple              # (scenario label, message) for scenarios that failed

    def marginal_tables(self, estimator: str = "naive") -> dict:
        return marginal_tables(self.results, estimator)


def _run_one(spec: ScenarioSpec):
    try:
        return run_scenario(spec)
    except EnrtError as exc:
        return exc


def run_grid(grid: GridSpec, workers: int = 1, progress=None) -> GridResult:
    """Run every valid scenario of ``grid``.

    Excluded scenarios (``p_y0 * rr > 1``) are listed in ``excluded``.
    Scenario-level failures are collected in ``errors`` rather than raised.
    """
    specs, excluded = grid.scenarios()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_one, specs))
    else:
        outs = []
        for i, s in enumerate(specs):
            outs.append(_run_one(s))
            if progress is not None:
                progress(i + 1, len(specs))
    results = tuple(o for o in outs if isinstance(o, ScenarioResult))
    errors = tuple((s.label(), str(o)) for s, o in zip(specs, outs) if not isinstance(o, ScenarioResult))
    return GridResult(results, tuple(excluded), errors)


MARGINAL_FACTORS = (("1-P_M", "p_m"), ("P_Y0", "p_y0"), ("delta_RR", "rr"), ("P_R", "p_r"))
MARGINAL_COLUMNS = ("bias_rd", "bias_rd_se", "rel_bias_rd", "rel_bias_rd_se",
                    "bias_rr", "bias_rr_se", "rel_bias_rr", "rel_bias_rr_se")


def marginal_tables(results: Sequence[ScenarioResult], estimator: str = "naive") -> dict:
    """Bias summaries averaged over the other grid parameters.

    For every factor level: mean empirical bias (mean estimate minus truth)
    and the mean per-scenario empirical SE, then the mean relative bias
    ``|bias| / |truth|`` and the mean of ``SE / |truth|``; first for RD, then
    RR.  Scenarios with zero true RD (``rr == 1``) are left out of the RD
    relative-bias average.
    """
    tables = {}
    for title, attr in MARGINAL_FACTORS:
        levels = sorted({getattr(r.spec, attr) for r in results})
        rows = []
        for lv in levels:
            sub = [r for r in results if getattr(r.spec, attr) == lv]
            b_rd, s_rd, rb_rd, rs_rd, b_rr, s_rr, rb_rr, rs_rr = ([] for _ in range(8))
            for r in sub:
                s = r.estimators[estimator]
                t_rd, t_rr = r.spec.true_rd, r.spec.rr
                b_rd.append(s.mean_rd - t_rd)
                s_rd.append(s.emp_se_rd)
                rr_sd = s.mc_se_rr * math.sqrt(s.n_ok)
                b_rr.append(s.mean_rr - t_rr)
                s_rr.append(rr_sd)
                rb_rr.append(abs(s.mean_rr - t_rr) / t_rr)
                rs_rr.append(rr_sd / t_rr)
                if abs(t_rd) > 1e-12:
                    rb_rd.append(abs(s.mean_rd - t_rd) / abs(t_rd))
                    rs_rd.append(s.emp_se_rd / abs(t_rd))
            level = 1 - lv if attr == "p_m" else lv
            rows.append((round(level, 10),) + tuple(_mean(x) for x in
                                                    (b_rd, s_rd, rb_rd, rs_rd, b_rr, s_rr, rb_rr, rs_rr)))
        if attr == "p_m":
            rows.sort()
        tables[title] = rows
    return tables


def format_marginal_table(title: str, rows, digits: int = 2) -> str:
    """Plain-text table: ``level | Bias RD (SE) | Rel. bias RD (SE) | Bias RR (SE) | Rel. bias RR (SE)``."""
    f = lambda x: f"{x:.{digits}f}"
    header = f"{title:>9} | {'Bias RD (SE)':>16} | {'Rel bias RD (SE)':>16} | {'Bias RR (SE)':>16} | {'Rel bias RR (SE)':>16}"
    lines = [header, "-" * len(header)]
    for lv, *v in rows:
        cells = [f"{f(v[i])} ({f(v[i + 1])})" for i in (0, 2, 4, 6)]
        lines.append(f"{lv:>9.2f} | " + " | ".join(f"{c:>16}" for c in cells))
    return "\n".join(lines)


__all__ = [
    "ESTIMATORS", "EstimatorSummary", "GridResult", "GridSpec", "METRICS", "PAPER_GRID",
    "ScenarioResult", "ScenarioSpec", "SimArrays", "analyze_replicate", "format_marginal_table",
    "generate_dataset", "hptn_like_spec", "logit_intercept", "marginal_risk", "marginal_tables", "run_grid",
    "run_scenario", "scenario_is_valid", "simulate_arrays", "simulate_replicates",
]
