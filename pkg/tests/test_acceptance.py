"""Acceptance criteria 1-9.

Each test prints one ``[criterion N] PASS|FAIL ...`` line to the terminal
(also under output capture) and then asserts.  All simulation-based checks
use one fixed root seed, 2023.
"""
import json
import math
import time

import numpy as np
import pytest

from enrtspill import cli
from enrtspill.errors import EnrtError
from enrtspill.estimators import (
    check_matrix_constraints,
    estimate_misclassification,
    forward_misclassify,
    inverse_cells,
    matrix_correct,
    naive_aspe,
    inverse_matrix_correct,
    PredictiveValues,
)
from enrtspill.mle import MleConfig, fit_mle, log_likelihood
from enrtspill.model import FourfoldTable, build_fourfold, write_csv
from enrtspill.sim import GridSpec, ScenarioSpec, generate_dataset, hptn_like_spec, run_grid, run_scenario
from enrtspill.variance import delta_variance

SEED = 2023
SUBGRID = dict(p_m=[0.5, 0.9], p_y0=[0.1, 0.5], rr=[0.75, 3], p_r=[0.2, 0.5])


@pytest.fixture
def report(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(n, ok, detail=""):
        with capman.global_and_fixture_disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {detail}", flush=True)
    return emit


def _label(spec):
    return f"P_M={spec.p_m} P_Y0={spec.p_y0} RR={spec.rr} P_R={spec.p_r}"


@pytest.fixture(scope="module")
def subgrid():
    """12 valid scenarios, K=300, 500 replications, rho=0."""
    t0 = time.perf_counter()
    grid = GridSpec.from_dict({**SUBGRID, "k": 300, "reps": 500, "seed": SEED})
    res = run_grid(grid)
    assert len(res.results) == 12 and not res.errors
    return res, time.perf_counter() - t0


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_analytic_bias(report, capsys):
    t0 = time.perf_counter()
    got = {}
    for one_minus in (0.10, 0.25, 0.50, 0.75, 0.90):
        p_m = round(1 - one_minus, 10)
        code = cli.main(["bias", "--p-y0", "0.25", "--rr", "3", "--p-m", str(p_m), "--p-r", "0.5",
                         "--format", "json"])
        assert code == 0
        got[one_minus] = json.loads(capsys.readouterr().out)["bias"]["rel_bias_rd"]
    elapsed = time.perf_counter() - t0
    ok = all(abs(v - k) < 1e-12 for k, v in got.items()) and elapsed < 1.0
    report(1, ok, f"rel bias RD by 1-P_M: {', '.join(f'{k:.2f}->{v:.2f}' for k, v in got.items())}; "
                  f"{elapsed:.3f}s")
    assert ok


# -- 2 ---------------------------------------------------------------------------

def test_criterion_2_naive_bias_matches_analytic(subgrid, report):
    res, elapsed = subgrid
    worst = []
    for r in res.results:
        s = r.estimators["naive"]
        z_rd = (s.mean_rd - r.analytic.delta_rd_star) / s.mc_se_rd
        z_rr = (s.mean_rr - r.analytic.delta_rr_star) / s.mc_se_rr
        worst.append((max(abs(z_rd), abs(z_rr)), z_rd, z_rr, _label(r.spec)))
    worst.sort(reverse=True)
    ok = worst[0][0] < 3 and elapsed < 300
    report(2, ok, f"max |z| = {worst[0][0]:.2f} (z_RD={worst[0][1]:.2f}, z_RR={worst[0][2]:.2f} at "
                  f"{worst[0][3]}); subgrid runtime {elapsed:.1f}s")
    assert ok, worst[:3]


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_correction_recovery(subgrid, report):
    res, _ = subgrid
    failures, n_checked, est_notes = [], 0, []
    for r in res.results:
        if r.estimators["matrix_known"].failure_rate > 0:
            continue                       # constraint violated in some replicate
        n_checked += 1
        for name in ("matrix_known", "inverse_known"):
            s = r.estimators[name]
            z_rd = (s.mean_rd - r.spec.true_rd) / s.mc_se_rd
            z_rr = (s.mean_rr - r.spec.rr) / s.mc_se_rr
            if abs(z_rd) >= 3 or abs(z_rr) >= 3:
                failures.append(f"{name} {_label(r.spec)}: z_RD={z_rd:.2f} z_RR={z_rr:.2f} "
                                f"(mean RR {s.mean_rr:.3f} vs {r.spec.rr})")
        e = r.estimators["matrix_est"]
        est_notes.append(abs(e.mean_rd - r.spec.true_rd) / e.mc_se_rd if e.n_ok else np.nan)

    # theta + phi = 1: matrix must refuse, inverse-matrix must recover
    sing = run_scenario(ScenarioSpec(p_m=0.0, p_y0=0.25, rr=3.0, p_r=0.5, icc=0.0, k=300, n_k=3,
                                     reps=500, seed=SEED))
    refused = sing.estimators["matrix_known"].failure_rate == 1.0
    inv = sing.estimators["inverse_known"]
    z_rd = (inv.mean_rd - sing.spec.true_rd) / inv.mc_se_rd
    z_rr = (inv.mean_rr - sing.spec.rr) / inv.mc_se_rr
    if not refused:
        failures.append("matrix method did not refuse theta+phi=1")
    if abs(z_rd) >= 3 or abs(z_rr) >= 3:
        failures.append(f"inverse_known at theta+phi=1: z_RD={z_rd:.2f} z_RR={z_rr:.2f}")
    ok = not failures and n_checked > 0
    report(3, ok, f"{n_checked} constraint-satisfying scenarios + theta+phi=1 scenario "
                  f"(matrix refused: {refused}, inverse z_RD={z_rd:.2f}, z_RR={z_rr:.2f}); "
                  f"estimated-theta matrix max |z_RD|={np.nanmax(est_notes):.2f}"
                  + ("" if ok else "; failing: " + " | ".join(failures)))
    assert ok, failures


# -- 4 ---------------------------------------------------------------------------

def test_criterion_4_round_trip(report):
    rng = np.random.default_rng(SEED)
    worst_m = worst_i = 0.0
    n = 0
    while n < 1000:
        cells = rng.uniform(1, 1000, size=4)
        theta, phi = rng.uniform(0.01, 0.99, size=2)
        if abs(theta + phi - 1) <= 0.05:
            continue
        n += 1
        obs = forward_misclassify(*cells, theta, phi)
        corr = matrix_correct(FourfoldTable(*obs), theta, phi)
        got = np.array([corr.table.a, corr.table.b, corr.table.c, corr.table.d])
        worst_m = max(worst_m, float(np.max(np.abs(got / cells - 1))))
        # predictive values consistent with the same true table and (theta, phi)
        a, b, c, d = cells
        pv = PredictiveValues(theta * a / obs[0], phi * b / obs[1], theta * c / obs[2], phi * d / obs[3])
        inv = inverse_matrix_correct(FourfoldTable(*obs), pv)
        got = np.array([inv.table.a, inv.table.b, inv.table.c, inv.table.d])
        worst_i = max(worst_i, float(np.max(np.abs(got / cells - 1))))
    ok = worst_m < 1e-10 and worst_i < 1e-10
    report(4, ok, f"1000 tables: max rel error matrix {worst_m:.2e}, inverse-matrix {worst_i:.2e}")
    assert ok


# -- 5 ---------------------------------------------------------------------------

def test_criterion_5_coverage(subgrid, report):
    res, _ = subgrid
    cov = [r.estimators["matrix_known"].coverage_rd for r in res.results]
    avg = float(np.mean(cov))
    ok = abs(avg - 0.95) <= 0.02
    report(5, ok, f"mean known-parameter delta coverage of corrected RD = {avg:.4f} "
                  f"(range {min(cov):.3f}-{max(cov):.3f})")
    assert ok


# -- 6 ---------------------------------------------------------------------------

def test_criterion_6_clustering(report):
    grid = GridSpec.from_dict({**SUBGRID, "icc": [0.25], "k": 300, "reps": 1000, "seed": SEED,
                               "bootstrap_reps": 200})
    res = run_grid(grid)
    assert len(res.results) == 12 and not res.errors
    under, de_ratio, boot_ratio = 0, [], []
    for r in res.results:
        s = r.estimators["matrix_known"]
        under += s.emp_se_rd > 1.10 * s.model_se_rd
        de_ratio.append(s.de_se_rd / s.emp_se_rd)
        boot_ratio.append(s.boot_se_rd / s.emp_se_rd)
    de_ok = all(abs(x - 1) <= 0.10 for x in de_ratio)
    boot_ok = all(abs(x - 1) <= 0.10 for x in boot_ratio)
    ok = under >= 2 and de_ok and boot_ok
    report(6, ok, f"empirical SE > 1.1 x delta SE in {under}/12 scenarios; design-effect/empirical "
                  f"{min(de_ratio):.3f}-{max(de_ratio):.3f}; bootstrap/empirical "
                  f"{min(boot_ratio):.3f}-{max(boot_ratio):.3f}")
    assert ok


# -- 7 ---------------------------------------------------------------------------

def _richardson(f, x, h=1e-4):
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * max(1.0, abs(x[i]))
        d1 = (f(x + e) - f(x - e)) / (2 * e[i])
        d2 = (f(x + 2 * e) - f(x - 2 * e)) / (4 * e[i])
        g[i] = (4 * d1 - d2) / 3
    return g


def test_criterion_7_mle_recovery(report):
    spec = ScenarioSpec(p_m=0.75, p_y0=0.25, rr=1.6, p_r=0.5, icc=0.10, k=500, n_k=3, reps=200,
                        seed=SEED)
    est, failed = [], 0
    for r in range(spec.reps):
        try:
            est.append(fit_mle(generate_dataset(spec, r)).estimates["delta"])
        except EnrtError:
            failed += 1
    est = np.array(est)
    mc = est.std(ddof=1) / math.sqrt(est.size)
    z = (est.mean() - spec.true_rd) / mc

    data = generate_dataset(spec, 0)
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        p0, p1 = rng.uniform(0.15, 0.35), rng.uniform(0.3, 0.6)
        omega = np.array([math.log(p0 / (1 - p0)), math.log(p1 / (1 - p1)), rng.uniform(-4, -0.5),
                          rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0)])
        _, g = log_likelihood(omega, data, MleConfig(), gradient=True)
        fd = _richardson(lambda w: log_likelihood(w, data, MleConfig()), omega)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))))
    ok = abs(z) < 3 and worst < 1e-5
    report(7, ok, f"mean RD {est.mean():.4f} vs {spec.true_rd:.2f} (MC SE {mc:.4f}, z={z:.2f}, "
                  f"{failed} fit failures); gradient max rel error {worst:.1e}")
    assert ok


# -- 8 ---------------------------------------------------------------------------

def test_criterion_8_hptn_like_pattern(report, tmp_path, capsys):
    spec = hptn_like_spec(reps=200, seed=SEED)
    naive_abs, corr_abs, naive_lrr, corr_lrr, diffs, absdiffs = [], [], [], [], [], []
    n_constraint, wider = 0, True
    for r in range(spec.reps):
        d = generate_dataset(spec, r)
        t = build_fourfold(d)
        mc = estimate_misclassification(d)
        if not check_matrix_constraints(t, mc.theta, mc.phi).ok:
            n_constraint += 1
            continue
        nrd, nrr = naive_aspe(t)
        corr = matrix_correct(t, mc.theta, mc.phi)
        naive_abs.append(abs(nrd.point)), corr_abs.append(abs(corr.rd.point))
        naive_lrr.append(abs(math.log(nrr.point))), corr_lrr.append(abs(math.log(corr.rr.point)))
        w1 = delta_variance(t, "matrix", misclass=mc).se_rd
        w10 = delta_variance(t, "matrix", misclass=mc, validation_scale=10).se_rd
        wider &= w1 > w10
        try:
            m = fit_mle(d).estimates["delta"]
        except EnrtError:
            continue
        diffs.append(m - corr.rd.point)
        absdiffs.append(abs(m - corr.rd.point))
    mean_diff = float(np.mean(diffs))

    # the report itself, on the first simulated dataset
    path = tmp_path / "hptn.csv"
    write_csv(generate_dataset(spec, 0), path)
    code = cli.main(["estimate", str(path), "--validation-scale", "10", "--boot-reps", "200",
                     "--format", "json"])
    rows = json.loads(capsys.readouterr().out)["estimates"]
    pick = lambda lab, vm, sc, vs=1.0: next(x for x in rows if x["label"].startswith(lab)
                                            and x["variance_method"] == vm and x["scale"] == sc
                                            and x["validation_scale"] == vs)
    n_rd = pick("naive", "delta", "RD")
    m_rd, m_rd10 = pick("matrix", "delta", "RD"), pick("matrix", "delta", "RD", 10.0)
    rep_ok = (code == 0 and abs(m_rd["point"]) > abs(n_rd["point"])
              and abs(math.log(pick("matrix", "delta", "RR")["point"]))
              > abs(math.log(pick("naive", "delta", "RR")["point"]))
              and (m_rd["ci_high"] - m_rd["ci_low"]) > (m_rd10["ci_high"] - m_rd10["ci_low"])
              and all(any(x["variance_method"] == vm for x in rows)
                      for vm in ("delta", "design_effect", "bootstrap", "observed_information")))

    ok = (np.mean(corr_abs) > np.mean(naive_abs) and np.mean(corr_lrr) > np.mean(naive_lrr)
          and wider and abs(mean_diff) < 0.05 and rep_ok)
    report(8, ok, f"mean |RD| corrected {np.mean(corr_abs):.3f} > naive {np.mean(naive_abs):.3f}; "
                  f"mean |log RR| {np.mean(corr_lrr):.3f} > {np.mean(naive_lrr):.3f}; "
                  f"n_v CI wider than 10 n_v: {wider}; mean MLE - matrix RD = {mean_diff:+.3f} "
                  f"over {len(diffs)} datasets ({n_constraint} matrix constraint failures excluded; "
                  f"mean |difference| {np.mean(absdiffs):.3f}); report rows OK: {rep_ok}")
    assert ok


# -- 9 ---------------------------------------------------------------------------

def test_criterion_9_determinism(report, tmp_path, capsys):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"p_m": [0.5, 0.9], "p_y0": [0.1, 0.5], "rr": [3], "p_r": [0.5],
                               "icc": [0.1], "k": 100, "reps": 40, "seed": SEED, "bootstrap_reps": 20}))
    outs = {}
    for tag, w in (("w1", 1), ("w8", 8), ("w1b", 1)):
        assert cli.main(["simulate", str(cfg), "--workers", str(w), "--out-dir",
                         str(tmp_path / tag), "--format", "json"]) == 0
        outs[tag] = {p.name: p.read_bytes() for p in (tmp_path / tag).iterdir()}
    capsys.readouterr()
    sim_same = outs["w1"] == outs["w8"] == outs["w1b"]

    data = tmp_path / "d.csv"
    write_csv(generate_dataset(ScenarioSpec(p_m=0.8, p_y0=0.3, rr=2.0, p_r=0.5, icc=0.1, k=200,
                                            n_k=3, reps=1, seed=SEED), 0), data)
    est = []
    for w in (1, 8, 1):
        cli.main(["estimate", str(data), "--boot-reps", "300", "--workers", str(w), "--format", "json"])
        est.append(capsys.readouterr().out)
    est_same = est[0] == est[1] == est[2]
    ok = sim_same and est_same
    report(9, ok, f"simulate files identical at 1/8 workers and on rerun: {sim_same}; "
                  f"estimate JSON identical: {est_same}")
    assert ok
