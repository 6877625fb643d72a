"""Point estimators of the average spillover effect (ASpE).

Naive estimators use the observed exposure; the matrix method corrects the
observed 2x2 table with sensitivity/specificity, the inverse-matrix method
with case-stratified predictive values.  The array-level helpers
(``matrix_cells``, ``inverse_cells``, ``rd_rr``) broadcast so that the
bootstrap and simulation code can evaluate thousands of tables at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .errors import (
    EmptyArm,
    EmptyMargin,
    EmptyStratum,
    InputError,
    InvalidRisk,
    NegativeCellEstimate,
    NonInvertible,
    ZeroDenominator,
    ZeroReferenceRisk,
)
from .model import (
    EffectEstimate,
    EnrtData,
    FourfoldTable,
    MisclassModel,
    ValidationTable,
    build_validation_table,
)

INVERTIBILITY_TOL = 1e-6


class Correction(NamedTuple):
    table: FourfoldTable
    rd: EffectEstimate
    rr: EffectEstimate


# -- array helpers -----------------------------------------------------------------

def rd_rr(a, b, c, d):
    """Risk difference and ratio from (possibly array-valued) cells."""
    a, b, c, d = (np.asarray(x, dtype=float) for x in (a, b, c, d))
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = a / (a + c)
        p0 = b / (b + d)
        return p1 - p0, p1 / p0


def matrix_cells(A, B, C, D, theta, phi):
    """Corrected cells (a, b, c, d) from observed cells and (theta, phi)."""
    det = 1.0 - phi - theta
    m1 = A + B
    m0 = C + D
    with np.errstate(divide="ignore", invalid="ignore"):
        return ((B - phi * m1) / det, (A - theta * m1) / det,
                (D - phi * m0) / det, (C - theta * m0) / det)


def inverse_cells(A, B, C, D, ppv1, npv1, ppv0, npv0):
    """Corrected cells from case- and non-case-specific predictive values."""
    return (ppv1 * A + (1 - npv1) * B, (1 - ppv1) * A + npv1 * B,
            ppv0 * C + (1 - npv0) * D, (1 - ppv0) * C + npv0 * D)


def forward_misclassify(a, b, c, d, theta, phi):
    """Expected observed cells given true cells under non-differential error."""
    return (theta * a + (1 - phi) * b, (1 - theta) * a + phi * b,
            theta * c + (1 - phi) * d, (1 - theta) * c + phi * d)


# -- naive -----------------------------------------------------------------------

def naive_aspe(table: FourfoldTable, continuity: bool = False, method: Optional[str] = None):
    """Sample-proportion RD and RR from a 2x2 table.

    Applied to an observed-exposure table this is the naive (attenuated)
    estimator; on a true-exposure table it is the oracle estimator.
    ``continuity`` adds 0.5 to every cell (exploratory use only).

    Returns
    -------
    (EffectEstimate, EffectEstimate)
        RD and RR estimates, without standard errors.
    """
    if method is None:
        method = {"observed": "naive", "true": "true_exposure"}.get(table.exposure_kind, "corrected")
    a, b, c, d = table.a, table.b, table.c, table.d
    if continuity:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    if a + c <= 0 or b + d <= 0:
        raise EmptyArm(f"an exposure group is empty (n1={a + c}, n0={b + d})")
    if b <= 0:
        raise ZeroReferenceRisk("risk ratio undefined: no outcomes in the unexposed group")
    rd, rr = rd_rr(a, b, c, d)
    return EffectEstimate("RD", float(rd), method), EffectEstimate("RR", float(rr), method)


# -- misclassification parameters --------------------------------------------------

def theta_phi_from_pm(p_m: float, p_r: float):
    """Sensitivity and specificity implied by network misclassification.

    A member recorded in the wrong network lands in a uniformly chosen other
    network, whose arm is an independent Bernoulli(``p_r``) draw.
    """
    if not 0.0 <= p_m <= 1.0:
        raise InputError(f"p_m must lie in [0, 1], got {p_m}")
    if not 0.0 < p_r < 1.0:
        raise InputError(f"p_r must lie in (0, 1), got {p_r}")
    return p_m + (1 - p_m) * p_r, p_m + (1 - p_m) * (1 - p_r)


def estimate_theta_phi(vt: ValidationTable) -> MisclassModel:
    """Sensitivity and specificity from a validation 2x2 table, with binomial SEs."""
    if vt.n1_ <= 0 or vt.n0_ <= 0:
        raise EmptyMargin(
            f"validation table needs truly exposed and unexposed members (n1.={vt.n1_}, n0.={vt.n0_})")
    theta = vt.n11 / vt.n1_
    phi = vt.n00 / vt.n0_
    return MisclassModel(theta=theta, phi=phi, provenance="validation_table",
                         se_theta=float(np.sqrt(theta * (1 - theta) / vt.n1_)),
                         se_phi=float(np.sqrt(phi * (1 - phi) / vt.n0_)),
                         n_theta=vt.n1_, n_phi=vt.n0_)


@dataclass(frozen=True)
class PredictiveValues:
    """PPV = Pr(G=1 | G*=1) and NPV = Pr(G=0 | G*=0), by case status.

    Suffix 1 is cases (Y=1), suffix 0 non-cases.  When ``stratified`` is
    false both strata carry the pooled values.  The ``n_*`` fields are the
    validation denominators.
    """

    ppv1: float
    npv1: float
    ppv0: float
    npv0: float
    n_pos1: float = np.inf
    n_neg1: float = np.inf
    n_pos0: float = np.inf
    n_neg0: float = np.inf
    stratified: bool = True

    def __post_init__(self):
        for name in ("ppv1", "npv1", "ppv0", "npv0"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {val}")

    def as_tuple(self):
        return self.ppv1, self.npv1, self.ppv0, self.npv0

    def variances(self, scale: float = 1.0):
        vals = np.array(self.as_tuple())
        dens = np.array([self.n_pos1, self.n_neg1, self.n_pos0, self.n_neg0], dtype=float) * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.isfinite(dens), vals * (1 - vals) / dens, 0.0)


def predictive_values_from_counts(val8, stratify_by_case: bool = True):
    """Array version over the last axis of 8-column validation counts.

    Column layout as in :class:`enrtspill.model.NetworkCounts`.  Returns
    ``(ppv1, npv1, ppv0, npv0, n_pos1, n_neg1, n_pos0, n_neg0)``; entries with
    empty denominators are NaN.
    """
    v = np.asarray(val8, dtype=float)
    v = v.reshape(v.shape[:-1] + (2, 2, 2))  # [y, g_star, g], value-1 first
    if not stratify_by_case:
        pooled = v.sum(axis=-3, keepdims=True)
        v = np.concatenate([pooled, pooled], axis=-3)
    pos = v[..., 0, 0] + v[..., 0, 1]   # g_star = 1, per y
    neg = v[..., 1, 0] + v[..., 1, 1]   # g_star = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ppv = v[..., 0, 0] / pos
        npv = v[..., 1, 1] / neg
    return (ppv[..., 0], npv[..., 0], ppv[..., 1], npv[..., 1],
            pos[..., 0], neg[..., 0], pos[..., 1], neg[..., 1])


def estimate_ppv_npv(data: EnrtData, stratify_by_case: bool = True) -> PredictiveValues:
    """Empirical predictive values among validation members.

    Raises :class:`EmptyStratum` when a required stratum has no members with
    the relevant observed exposure, which makes the inverse-matrix method
    inapplicable.
    """
    val = data.validation_mask
    if not val.any():
        raise EmptyStratum("no validation members")
    y = data.y[val].astype(np.int64)
    gs = data.g_star[val].astype(np.int64)
    g = data.g[val].astype(np.int64)
    counts = np.bincount(4 * (1 - y) + 2 * (1 - gs) + (1 - g), minlength=8)
    ppv1, npv1, ppv0, npv0, np1, nn1, np0, nn0 = predictive_values_from_counts(counts, stratify_by_case)
    dens = {"cases, G*=1": np1, "cases, G*=0": nn1, "non-cases, G*=1": np0, "non-cases, G*=0": nn0}
    empty = [k for k, n in dens.items() if n == 0]
    if empty:
        raise EmptyStratum("no validation members in stratum: " + "; ".join(empty))
    return PredictiveValues(float(ppv1), float(npv1), float(ppv0), float(npv0),
                            float(np1), float(nn1), float(np0), float(nn0),
                            stratified=stratify_by_case)


def predictive_values_from_model(theta, phi, p1, p0, p_r) -> PredictiveValues:
    """Population predictive values implied by (theta, phi), risks and allocation.

    ``p1``/``p0`` are the outcome risks of truly exposed/unexposed members.
    """
    def pv(r1, r0):
        pos_true = theta * p_r * r1
        pos_false = (1 - phi) * (1 - p_r) * r0
        neg_true = phi * (1 - p_r) * r0
        neg_false = (1 - theta) * p_r * r1
        return pos_true / (pos_true + pos_false), neg_true / (neg_true + neg_false)

    ppv1, npv1 = pv(p1, p0)
    ppv0, npv0 = pv(1 - p1, 1 - p0)
    return PredictiveValues(float(ppv1), float(npv1), float(ppv0), float(npv0))


# -- matrix method --------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintCheck:
    """Admissibility of the matrix method for one table and (theta, phi).

    ``theta_bound``/``phi_bound`` are the thresholds the parameters must
    exceed (``direction == ">"``) or stay below (``"<"``).
    """

    ok: bool
    invertible: bool
    direction: str
    theta_bound: float
    phi_bound: float
    violations: tuple = field(default_factory=tuple)


def check_matrix_constraints(table: FourfoldTable, theta: float, phi: float,
                             tol: float = INVERTIBILITY_TOL) -> ConstraintCheck:
    """Diagnose whether matrix correction yields positive cells.

    With ``theta + phi > 1``, ``theta`` must exceed Pr(G*=1 | Y=y) and ``phi``
    must exceed Pr(G*=0 | Y=y) for both outcome levels; with ``theta + phi < 1``
    both must lie strictly below the corresponding minima.
    """
    m1, m0 = table.m1, table.m0
    if m1 <= 0 or m0 <= 0:
        return ConstraintCheck(False, abs(theta + phi - 1) >= tol, "?", np.nan, np.nan,
                               ("an outcome margin is empty",))
    g1 = (table.a / m1, table.c / m0)   # Pr(G*=1 | Y=1), Pr(G*=1 | Y=0)
    g0 = (table.b / m1, table.d / m0)   # Pr(G*=0 | Y=1), Pr(G*=0 | Y=0)
    if abs(theta + phi - 1) < tol:
        return ConstraintCheck(False, False, "=", np.nan, np.nan,
                               (f"theta + phi = {theta + phi:.6g} is within {tol:g} of 1; "
                                "misclassification matrix is singular",))
    violations = []
    if theta + phi > 1:
        tb, pb = max(g1), max(g0)
        if not theta > tb:
            violations.append(f"theta={theta:.4g} must exceed max(Pr(G*=1|Y))={tb:.4g}")
        if not phi > pb:
            violations.append(f"phi={phi:.4g} must exceed max(Pr(G*=0|Y))={pb:.4g}")
        direction = ">"
    else:
        tb, pb = min(g1), min(g0)
        if not theta < tb:
            violations.append(f"theta={theta:.4g} must lie below min(Pr(G*=1|Y))={tb:.4g}")
        if not phi < pb:
            violations.append(f"phi={phi:.4g} must lie below min(Pr(G*=0|Y))={pb:.4g}")
        direction = "<"
    return ConstraintCheck(not violations, True, direction, float(tb), float(pb), tuple(violations))


def matrix_correct(table: FourfoldTable, theta: float, phi: float,
                   tol: float = INVERTIBILITY_TOL) -> Correction:
    """Matrix-method correction of an observed table.

    Negative corrected cells raise :class:`NegativeCellEstimate` instead of
    being clamped; the inverse-matrix method is the fallback in that case.
    """
    if abs(theta + phi - 1) < tol:
        raise NonInvertible(f"theta + phi = {theta + phi:.6g} is within {tol:g} of 1")
    cells = matrix_cells(table.a, table.b, table.c, table.d, theta, phi)
    slack = 1e-9 * max(table.N, 1.0)
    if min(cells) < -slack:
        chk = check_matrix_constraints(table, theta, phi, tol)
        raise NegativeCellEstimate(
            "matrix correction gives negative cell counts: " + "; ".join(chk.violations)
            + " (consider the inverse-matrix method)")
    cells = [max(x, 0.0) for x in cells]
    corrected = FourfoldTable(*cells, exposure_kind="corrected")
    rd, rr = _corrected_effects(corrected, "matrix")
    return Correction(corrected, rd, rr)


def _corrected_effects(table: FourfoldTable, method: str):
    if table.n1 <= 0 or table.n0 <= 0:
        raise ZeroDenominator(f"corrected exposure margin is zero (n1={table.n1:.4g}, n0={table.n0:.4g})")
    rd, rr = rd_rr(table.a, table.b, table.c, table.d)
    if table.b <= 0:
        raise ZeroDenominator("corrected reference risk is zero; risk ratio undefined")
    return EffectEstimate("RD", float(rd), method), EffectEstimate("RR", float(rr), method)


# -- inverse-matrix method -----------------------------------------------------

def inverse_matrix_correct(table: FourfoldTable, ppv1, npv1=None, ppv0=None, npv0=None) -> Correction:
    """Inverse-matrix correction with case-specific predictive values.

    Accepts either a :class:`PredictiveValues` as the second argument or
    the four values positionally.
    """
    if isinstance(ppv1, PredictiveValues):
        ppv1, npv1, ppv0, npv0 = ppv1.as_tuple()
    for name, val in (("ppv1", ppv1), ("npv1", npv1), ("ppv0", ppv0), ("npv0", npv0)):
        if val is None or not 0.0 <= val <= 1.0:
            raise InputError(f"{name} must lie in [0, 1], got {val}")
    cells = inverse_cells(table.a, table.b, table.c, table.d, ppv1, npv1, ppv0, npv0)
    corrected = FourfoldTable(*cells, exposure_kind="corrected")
    rd, rr = _corrected_effects(corrected, "inverse_matrix")
    return Correction(corrected, rd, rr)


# -- analytic bias ---------------------------------------------------------------

@dataclass(frozen=True)
class BiasReport:
    """Large-sample behaviour of the naive estimators.

    ``delta_rd_star``/``delta_rr_star`` are the limits of the naive RD and
    RR; biases are limit minus truth and relative biases are absolute.
    """

    p_y0: float
    rr: float
    p_m: float
    p_r: float
    delta_rd: float
    delta_rr: float
    delta_rd_star: float
    delta_rr_star: float
    bias_rd: float
    bias_rr: float
    rel_bias_rd: float
    rel_bias_rr: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def attenuated_rr(rr, p_m, p_r):
    """Limit of the naive risk ratio; does not depend on the baseline risk."""
    theta = p_m + (1 - p_m) * p_r
    phi = p_m + (1 - p_m) * (1 - p_r)
    num = (rr * theta + (1 - p_m) * (1 - p_r)) * (1 - p_r)
    den = p_r * rr * (1 - theta) + phi * (1 - p_r)
    return num / den


def analytic_bias(p_y0: float, rr: float, p_m: float, p_r: float) -> BiasReport:
    """Closed-form bias of the naive RD and RR under network misclassification."""
    if not 0.0 < p_y0 < 1.0:
        raise InvalidRisk(f"baseline risk must lie in (0, 1), got {p_y0}")
    if rr < 0 or p_y0 * rr > 1.0:
        raise InvalidRisk(f"exposed risk p_y0 * rr = {p_y0 * rr:.4g} is not a probability")
    if not 0.0 <= p_m <= 1.0:
        raise InputError(f"p_m must lie in [0, 1], got {p_m}")
    if not 0.0 < p_r < 1.0:
        raise InputError(f"p_r must lie in (0, 1), got {p_r}")
    delta_rd = p_y0 * (rr - 1)
    rd_star = p_y0 * p_m * (rr - 1)
    rr_star = float(attenuated_rr(rr, p_m, p_r))
    return BiasReport(
        p_y0=p_y0, rr=rr, p_m=p_m, p_r=p_r,
        delta_rd=delta_rd, delta_rr=rr,
        delta_rd_star=rd_star, delta_rr_star=rr_star,
        bias_rd=p_y0 * (rr - 1) * (p_m - 1),
        bias_rr=rr_star - rr,
        rel_bias_rd=1 - p_m,
        rel_bias_rr=abs(rr_star / rr - 1) if rr > 0 else np.nan,
    )


# -- non-differential misclassification check --------------------------------------

SMALL_SAMPLE_N = 100
SMALL_SAMPLE_CELL = 5


@dataclass(frozen=True)
class NondifferentialResult:
    """Comparison of classification accuracy between cases and non-cases.

    ``p_value`` combines the two-proportion z statistics for sensitivity and
    specificity into a 2-df chi-square.  ``correlation`` is the pooled
    within-G correlation of (Y, G*); values near 0 support non-differential
    error.  ``warning`` is set for small validation samples.
    """

    p_value: float
    statistic: float
    z_theta: float
    z_phi: float
    p_theta: float
    p_phi: float
    theta_case: float
    phi_case: float
    theta_noncase: float
    phi_noncase: float
    correlation: float
    correlation_by_g: tuple
    n_validation: int
    warning: Optional[str] = None


def _two_prop_z(x1, n1, x0, n0):
    if n1 == 0 or n0 == 0:
        return np.nan
    pooled = (x1 + x0) / (n1 + n0)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n0)
    if var == 0:
        return 0.0
    return (x1 / n1 - x0 / n0) / np.sqrt(var)


def _phi_coef(x, y):
    if x.size < 2 or x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def nondifferential_test(data: EnrtData) -> NondifferentialResult:
    """Test whether sensitivity/specificity differ between cases and non-cases."""
    val = data.validation_mask
    y = data.y[val].astype(int)
    gs = data.g_star[val].astype(int)
    g = data.g[val].astype(int)
    n_v = int(val.sum())

    def counts(case):
        s = y == case
        exposed = s & (g == 1)
        unexposed = s & (g == 0)
        return (int((gs[exposed] == 1).sum()), int(exposed.sum()),
                int((gs[unexposed] == 0).sum()), int(unexposed.sum()))

    t1, nt1, f1, nf1 = counts(1)
    t0, nt0, f0, nf0 = counts(0)
    empty = [name for name, n in (("exposed cases", nt1), ("exposed non-cases", nt0),
                                  ("unexposed cases", nf1), ("unexposed non-cases", nf0)) if n == 0]
    if empty:
        raise EmptyStratum("validation stratum empty: " + ", ".join(empty))
    z_t = _two_prop_z(t1, nt1, t0, nt0)
    z_f = _two_prop_z(f1, nf1, f0, nf0)
    stat = z_t ** 2 + z_f ** 2
    corr = []
    weights = []
    for gv in (0, 1):
        s = g == gv
        corr.append(_phi_coef(y[s].astype(float), gs[s].astype(float)))
        weights.append(s.sum())
    pooled = float(np.average(corr, weights=weights))

    cells = np.bincount(4 * y + 2 * gs + g, minlength=8)
    warning = None
    if n_v < SMALL_SAMPLE_N or cells.min() < SMALL_SAMPLE_CELL:
        warning = (f"small validation sample (n_v={n_v}, smallest Y x G* x G cell={cells.min()}); "
                   "the test has low power")
    return NondifferentialResult(
        p_value=float(stats.chi2.sf(stat, df=2)), statistic=float(stat),
        z_theta=float(z_t), z_phi=float(z_f),
        p_theta=float(2 * stats.norm.sf(abs(z_t))), p_phi=float(2 * stats.norm.sf(abs(z_f))),
        theta_case=t1 / nt1, phi_case=f1 / nf1, theta_noncase=t0 / nt0, phi_noncase=f0 / nf0,
        correlation=pooled, correlation_by_g=tuple(corr), n_validation=n_v, warning=warning)


def estimate_misclassification(data: EnrtData) -> MisclassModel:
    """Shortcut: validation table then :func:`estimate_theta_phi`."""
    model = estimate_theta_phi(build_validation_table(data))
    if data.allocation_prob is not None:
        model = MisclassModel(model.theta, model.phi, data.allocation_prob, None, model.provenance,
                              model.se_theta, model.se_phi, model.n_theta, model.n_phi)
    return model
