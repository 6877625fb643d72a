"""Command-line interface: ``enrtspill {estimate,simulate,bias,bootstrap,mle}``.

Exit codes: 0 success, 2 input error, 3 estimation error, 4 partial
simulation failure.  Machine-readable output (CSV/JSON) carries full
precision and a metadata block (seed, config hash) that identifies the
run; human tables show 4 significant digits.  Nothing time- or
worker-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .errors import EstimationError, InputError
from .estimators import (
    PredictiveValues,
    analytic_bias,
    check_matrix_constraints,
    estimate_misclassification,
    estimate_ppv_npv,
    inverse_matrix_correct,
    matrix_correct,
    naive_aspe,
    nondifferential_test,
)
from .mle import MleConfig, fit_mle
from .model import EnrtData, MisclassModel, build_fourfold, read_csv
from .variance import (
    BootstrapSpec,
    delta_variance,
    design_effect,
    estimate_icc,
    mean_members_per_network,
    network_bootstrap,
)

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_PARTIAL = 0, 2, 3, 4
EXTERNAL_FOOTER = ("External misclassification parameters are assumed transportable to this "
                   "study population; that assumption is the analyst's responsibility.")


# -- formatting helpers ----------------------------------------------------------

def sig4(x) -> str:
    """Four significant digits (the precision of human-readable tables)."""
    if x is None:
        return ""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return f"{float(x):.4g}"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def metadata(command: str, args: argparse.Namespace, inputs=()) -> dict:
    """Reproducibility block.  Output-only options (format, out-dir, workers) are omitted."""
    skip = {"func", "format", "out_dir", "workers", "command"}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    files = {os.path.basename(p): _file_sha256(p) for p in inputs}
    blob = json.dumps({"command": command, "config": _clean(config), "inputs": files}, sort_keys=True)
    return {"command": command, "package_version": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "seed": config.get("seed"), "config": _clean(config),
            "input_sha256": files, "config_hash": hashlib.sha256(blob.encode()).hexdigest()}


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else (repr(float(r[k])) if isinstance(r.get(k), (float, np.floating))
                                                    else r.get(k))) for k in columns})
    return buf.getvalue()


def text_table(rows, columns, headers=None) -> str:
    headers = headers or columns
    cells = [[sig4(r.get(c)) if isinstance(r.get(c), (float, int, np.floating)) and not isinstance(r.get(c), bool)
              else str(r.get(c, "") if r.get(c) is not None else "") for c in columns] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) if cells else len(h) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    out = [line, "-" * len(line)]
    out += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(out)


def _emit(args, name: str, report: dict, rows, columns, text: str):
    """Print in the requested format and, with ``--out-dir``, write all three."""
    payload = {"json": dumps(report), "csv": rows_to_csv(rows, columns),
               "table": text + "\n"}
    sys.stdout.write(payload[args.format])
    if getattr(args, "out_dir", None):
        os.makedirs(args.out_dir, exist_ok=True)
        for fmt, ext in (("json", "json"), ("csv", "csv"), ("table", "txt")):
            with open(os.path.join(args.out_dir, f"{name}.{ext}"), "w", newline="") as fh:
                fh.write(payload[fmt])


# -- estimate ----------------------------------------------------------------------

ESTIMATE_COLUMNS = ("label", "method", "variance_method", "validation_scale", "scale",
                    "point", "se", "ci_low", "ci_high")


def _external_misclass(args) -> Optional[MisclassModel]:
    if args.theta is None and args.phi is None:
        return None
    if args.theta is None or args.phi is None:
        raise InputError("--theta and --phi must be given together")
    return MisclassModel(args.theta, args.phi, provenance="external",
                         se_theta=args.se_theta, se_phi=args.se_phi)


def _external_pv(args) -> Optional[PredictiveValues]:
    strat = [args.ppv1, args.npv1, args.ppv0, args.npv0]
    if args.ppv is not None or args.npv is not None:
        if args.ppv is None or args.npv is None:
            raise InputError("--ppv and --npv must be given together")
        if any(v is not None for v in strat):
            raise InputError("give either --ppv/--npv or the case-specific --ppv1/--npv1/--ppv0/--npv0")
        return PredictiveValues(args.ppv, args.npv, args.ppv, args.npv, stratified=False)
    if any(v is not None for v in strat):
        if any(v is None for v in strat):
            raise InputError("--ppv1, --npv1, --ppv0 and --npv0 must be given together")
        return PredictiveValues(*strat)
    return None


def _methods(arg: str):
    return ["naive", "matrix", "inverse-matrix", "mle"] if arg == "all" else [arg]


def _variances(arg: str):
    return ["delta", "design-effect", "bootstrap"] if arg == "all" else [arg]


def _row(label, est, validation_scale=1.0):
    d = est.as_dict()
    return {"label": label, "method": d["method"], "variance_method": d["variance_method"],
            "validation_scale": validation_scale, "scale": d["scale"], "point": d["point"],
            "se": d["se"], "ci_low": d["ci_low"], "ci_high": d["ci_high"]}


def build_report(data: EnrtData, args) -> dict:
    """Run the requested estimators and variance methods; return an AnalysisReport dict.

    With ``--method all`` or ``--variance all`` an estimation failure in one
    combination becomes a warning and the remaining rows are still reported;
    a single explicitly requested combination raises instead.
    """
    methods = _methods(args.method)
    variances = _variances(args.variance)
    lenient = args.method == "all" or args.variance == "all"
    table = build_fourfold(data, "observed")
    warnings = []
    rows = []
    ext_mc = _external_misclass(args)
    ext_pv = _external_pv(args)
    n_v = int(data.validation_mask.sum())
    arms = data.network_arm
    report = {
        "input": {"N_members": data.n_members, "K_networks": data.n_networks, "n_validation": n_v,
                  "networks_intervention": int(arms.sum()), "networks_control": int((1 - arms).sum()),
                  "observed_table": {"A": table.a, "B": table.b, "C": table.c, "D": table.d}},
    }

    def attempt(what, fn, hint=""):
        try:
            return fn()
        except EstimationError as exc:
            msg = f"{what}: {exc}" + (hint if hint and "inverse" not in str(exc) else "")
            if not lenient:
                raise type(exc)(msg) from None
            warnings.append(msg)
            return None

    de = None
    if "design-effect" in variances:
        m_bar = mean_members_per_network(data)
        if args.icc_override is not None:
            rho, latent, src = args.icc_override, None, "override"
        else:
            icc = attempt("ICC", lambda: estimate_icc(data, latent=True))
            rho = None if icc is None else icc.rho
            latent, src = (None if icc is None else icc.latent_rho), "anova_within_arm"
        if rho is not None:
            de = design_effect(m_bar, rho)
            report["clustering"] = {"icc": rho, "icc_source": src, "latent_icc": latent,
                                    "mean_network_size": m_bar, "design_effect": de}

    scales = [1.0] + ([args.validation_scale] if args.validation_scale else [])

    def delta_rows(label, method, rd, rr, misclass=None, pv=None, known=False):
        for vs in scales:
            if vs != 1.0 and (known or method == "naive"):
                continue
            dv = attempt(f"{label}, delta variance",
                         lambda: delta_variance(table, method, misclass=misclass, predictive=pv,
                                                known=known, validation_scale=vs))
            if dv is None:
                rows.append(_row(label, rd, vs))
                rows.append(_row(label, rr, vs))
                return
            if "delta" in variances:
                rows.append(_row(label, rd.with_se(dv.se_rd, "delta"), vs))
                rows.append(_row(label, rr.with_se(dv.se_log_rr, "delta"), vs))
            if "design-effect" in variances and de is not None:
                f = math.sqrt(de)
                rows.append(_row(label, rd.with_se(dv.se_rd * f, "design_effect"), vs))
                rows.append(_row(label, rr.with_se(dv.se_log_rr * f, "design_effect"), vs))

    def boot_rows(label, estimator, fixed):
        if "bootstrap" not in variances:
            return
        spec = BootstrapSpec(replicates=args.boot_reps, seed=args.seed,
                             resample_validation=fixed is None)
        br = attempt(f"{label}, bootstrap",
                     lambda: network_bootstrap(data, spec, estimator=estimator, fixed=fixed,
                                               workers=args.workers))
        if br is None:
            return
        rows.append(_row(label, br.rd))
        rows.append(_row(label, br.rr))
        if br.n_failed:
            warnings.append(f"{label}: {br.n_failed} of {spec.replicates} bootstrap replicates "
                            "failed and were dropped")

    if "naive" in methods:
        label = "naive (observed exposure)"
        rd, rr = naive_aspe(table)
        delta_rows(label, "naive", rd, rr)
        boot_rows(label, "naive", None)

    if n_v > 0:
        try:                       # a diagnostic only: never fatal
            nd = nondifferential_test(data)
        except EstimationError as exc:
            nd = None
            warnings.append(f"non-differential test not computed: {exc}")
        if nd is not None:
            report["nondifferential_test"] = {"p_value": nd.p_value, "statistic": nd.statistic,
                                              "correlation": nd.correlation, "warning": nd.warning}
            if nd.warning:
                warnings.append(nd.warning)

    if "matrix" in methods:
        label = "matrix-corrected"
        if ext_mc is not None:
            mc = ext_mc
        elif n_v > 0:
            mc = attempt("validation estimates", lambda: estimate_misclassification(data))
        else:
            raise InputError("the matrix method needs validation rows (v=1) or --theta/--phi")
        if mc is not None:
            report["misclassification"] = {"theta": mc.theta, "phi": mc.phi, "se_theta": mc.se_theta,
                                           "se_phi": mc.se_phi, "source": mc.provenance}
            cc = check_matrix_constraints(table, mc.theta, mc.phi)
            report["constraint_check"] = {"ok": cc.ok, "invertible": cc.invertible,
                                          "violations": list(cc.violations)}
            corr = attempt(label, lambda: matrix_correct(table, mc.theta, mc.phi),
                           hint="; try --method inverse-matrix")
            if corr is not None:
                known = mc.provenance == "external" and mc.se_theta is None and mc.se_phi is None
                delta_rows(label, "matrix", corr.rd, corr.rr, misclass=mc, known=known)
                boot_rows(label, "matrix", (mc.theta, mc.phi) if mc.provenance == "external" else None)

    if "inverse-matrix" in methods:
        label = "inverse-matrix-corrected"
        if ext_pv is not None:
            pv = ext_pv
        elif n_v > 0:
            pv = attempt("predictive values",
                         lambda: estimate_ppv_npv(data, stratify_by_case=not args.pooled_pv))
        else:
            raise InputError("the inverse-matrix method needs validation rows (v=1) or --ppv/--npv")
        if pv is not None:
            report["predictive_values"] = asdict(pv)
            corr = attempt(label, lambda: inverse_matrix_correct(table, pv))
            if corr is not None:
                delta_rows(label, "inverse_matrix", corr.rd, corr.rr, pv=pv, known=ext_pv is not None)
                boot_rows(label, "inverse_matrix", ext_pv)

    if "mle" in methods:
        fixed = None
        if ext_pv is not None:
            if ext_pv.stratified and (ext_pv.ppv1, ext_pv.npv1) != (ext_pv.ppv0, ext_pv.npv0):
                raise InputError("the MLE is non-differential; give pooled --ppv/--npv")
            fixed = (ext_pv.ppv1, ext_pv.npv1)
        elif n_v == 0:
            raise InputError("the MLE needs validation rows (v=1) or --ppv/--npv")
        mle_info = {}
        for scale in ("RD", "RR"):
            cfg = MleConfig(scale=scale, quadrature_nodes=args.nodes, fixed_ppv_npv=fixed, seed=args.seed)
            fit = attempt(f"MLE ({scale})", lambda: fit_mle(data, cfg))
            if fit is None:
                continue
            rows.append(_row("MLE", fit.effect))
            mle_info[scale] = {"estimates": fit.estimates, "se": fit.se, "loglik": fit.loglik,
                               "boundary": fit.boundary, "truncated_mass": fit.truncated_mass}
            if fit.boundary:
                warnings.append(f"MLE ({scale}): random-effect variance at its lower bound; "
                                "it is held fixed when computing standard errors")
        report["mle"] = mle_info

    report["estimates"] = rows
    report["warnings"] = warnings
    if ext_mc is not None or ext_pv is not None:
        report["footer"] = EXTERNAL_FOOTER
    return report


def _estimate_text(report: dict) -> str:
    inp = report["input"]
    lines = [f"members N={inp['N_members']}  networks K={inp['K_networks']}  validation n_v={inp['n_validation']}"
             f"  arms (intervention/control)={inp['networks_intervention']}/{inp['networks_control']}"]
    if "misclassification" in report:
        m = report["misclassification"]
        lines.append(f"theta={sig4(m['theta'])} (SE {sig4(m['se_theta'])})  phi={sig4(m['phi'])} "
                     f"(SE {sig4(m['se_phi'])})  [{m['source']}]")
    if "constraint_check" in report:
        lines.append(f"matrix constraints satisfied: {report['constraint_check']['ok']}")
    if "nondifferential_test" in report and "p_value" in report["nondifferential_test"]:
        lines.append(f"non-differential test p-value: {sig4(report['nondifferential_test']['p_value'])}")
    if "clustering" in report:
        c = report["clustering"]
        lines.append(f"ICC={sig4(c['icc'])} ({c['icc_source']})  mean network size={sig4(c['mean_network_size'])}"
                     f"  design effect={sig4(c['design_effect'])}")
    lines.append("")
    lines.append(text_table(report["estimates"], ESTIMATE_COLUMNS,
                            ["estimate", "method", "variance", "n_v x", "scale", "point", "SE", "CI low", "CI high"]))
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    if "footer" in report:
        lines.append(report["footer"])
    return "\n".join(lines)


def cmd_estimate(args) -> int:
    data = read_csv(args.data, allocation_prob=args.allocation_prob)
    report = build_report(data, args)
    report["metadata"] = metadata("estimate", args, [args.data])
    _emit(args, "report", report, report["estimates"], ESTIMATE_COLUMNS, _estimate_text(report))
    return EXIT_OK


# -- bootstrap / mle standalone ------------------------------------------------------

def cmd_bootstrap(args) -> int:
    data = read_csv(args.data)
    fixed = None
    est = args.method.replace("-", "_")
    if args.theta is not None or args.phi is not None:
        mc = _external_misclass(args)
        fixed = (mc.theta, mc.phi)
        if est != "matrix":
            raise InputError("--theta/--phi apply to --method matrix only")
    spec = BootstrapSpec(replicates=args.boot_reps, seed=args.seed,
                         ci_type="percentile" if args.ci == "percentile" else "wald_on_bootstrap_se")
    br = network_bootstrap(data, spec, estimator=est, fixed=fixed, workers=args.workers)
    rows = [_row(f"{args.method} bootstrap", br.rd), _row(f"{args.method} bootstrap", br.rr)]
    report = {"estimates": rows, "replicates": spec.replicates, "failed": br.n_failed,
              "failed_fraction": br.failed_fraction, "metadata": metadata("bootstrap", args, [args.data])}
    text = text_table(rows, ESTIMATE_COLUMNS) + f"\nfailed replicates: {br.n_failed} of {spec.replicates}"
    _emit(args, "bootstrap", report, rows, ESTIMATE_COLUMNS, text)
    return EXIT_OK


MLE_COLUMNS = ("scale", "parameter", "estimate", "se")


def cmd_mle(args) -> int:
    data = read_csv(args.data)
    fixed = None
    if args.ppv is not None or args.npv is not None:
        if args.ppv is None or args.npv is None:
            raise InputError("--ppv and --npv must be given together")
        fixed = (args.ppv, args.npv)
    scales = ["RD", "RR"] if args.scale == "both" else [args.scale]
    rows, fits = [], {}
    for sc in scales:
        fit = fit_mle(data, MleConfig(scale=sc, quadrature_nodes=args.nodes, fixed_ppv_npv=fixed,
                                      differential=args.differential, seed=args.seed))
        for k, v in fit.estimates.items():
            rows.append({"scale": sc, "parameter": k, "estimate": v, "se": fit.se.get(k)})
        fits[sc] = {"loglik": fit.loglik, "boundary": fit.boundary, "iterations": fit.n_iterations,
                    "truncated_mass": fit.truncated_mass, "effect": fit.effect.as_dict()}
    report = {"parameters": rows, "fits": fits, "metadata": metadata("mle", args, [args.data])}
    if fixed is not None:
        report["footer"] = EXTERNAL_FOOTER
    _emit(args, "mle", report, rows, MLE_COLUMNS, text_table(rows, MLE_COLUMNS))
    return EXIT_OK


# -- bias --------------------------------------------------------------------------

BIAS_COLUMNS = ("p_y0", "rr", "p_m", "p_r", "delta_rd", "delta_rd_star", "bias_rd", "rel_bias_rd",
                "delta_rr", "delta_rr_star", "bias_rr", "rel_bias_rr")


def cmd_bias(args) -> int:
    rep = analytic_bias(args.p_y0, args.rr, args.p_m, args.p_r).as_dict()
    report = {"bias": rep, "metadata": metadata("bias", args)}
    _emit(args, "bias", report, [rep], BIAS_COLUMNS, text_table([rep], BIAS_COLUMNS))
    return EXIT_OK


# -- simulate ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .sim import GridSpec, MARGINAL_COLUMNS, format_marginal_table, run_grid

    grid = GridSpec.from_json(args.config, k_scale=args.scale_k, reps_scale=args.scale_reps)
    result = run_grid(grid, workers=args.workers)
    rows = [r.as_row() for r in result.results]
    for r in rows:
        if r.get("member_counts") is not None:
            r["member_counts"] = " ".join(map(str, r["member_counts"]))
    columns = list(rows[0]) if rows else ["p_m", "p_y0", "rr", "p_r", "icc"]
    tables = result.marginal_tables() if rows else {}
    meta = metadata("simulate", args, [args.config])
    summary = {"scenarios_run": len(result.results), "scenarios_excluded": len(result.excluded),
               "scenarios_failed": len(result.errors), "excluded": list(result.excluded),
               "errors": [{"scenario": s, "error": e} for s, e in result.errors], "metadata": meta,
               "marginal_tables": {t: [dict(zip(("level",) + MARGINAL_COLUMNS, row)) for row in rws]
                                   for t, rws in tables.items()}}
    text = "\n\n".join(format_marginal_table(t, rws) for t, rws in tables.items())
    text = (f"scenarios run: {len(result.results)}  excluded (P_Y0*RR > 1): {len(result.excluded)}  "
            f"failed: {len(result.errors)}\n\n" + text)
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "scenarios.csv"), "w", newline="") as fh:
        fh.write(rows_to_csv(rows, columns))
    for t, rws in tables.items():
        fname = "marginal_" + t.replace("-", "_").replace("1_", "one_minus_").lower() + ".csv"
        with open(os.path.join(out_dir, fname), "w", newline="") as fh:
            fh.write(rows_to_csv([dict(zip(("level",) + MARGINAL_COLUMNS, r)) for r in rws],
                                 ("level",) + MARGINAL_COLUMNS))
    with open(os.path.join(out_dir, "marginal_tables.txt"), "w") as fh:
        fh.write(text + "\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(dumps(summary))
    if result.errors:
        with open(os.path.join(out_dir, "errors.log"), "w") as fh:
            for s, e in result.errors:
                fh.write(f"{s}\t{e}\n")
    payload = {"json": dumps(summary), "csv": rows_to_csv(rows, columns), "table": text + "\n"}
    sys.stdout.write(payload[args.format])
    return EXIT_PARTIAL if result.errors else EXIT_OK


# -- parser ------------------------------------------------------------------------

def _prob(s):
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{s} is not a probability in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enrtspill",
                                description="Spillover-effect estimation in egocentric-network "
                                            "randomized trials with misclassified networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, workers=True):
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")
        sp.add_argument("--out-dir", "--out", dest="out_dir", default=None, help="also write table, CSV and JSON files here")
        if seed:
            sp.add_argument("--seed", type=int, default=2023)
        if workers:
            sp.add_argument("--workers", type=int, default=1)

    def external(sp):
        g = sp.add_argument_group("external validation")
        g.add_argument("--theta", type=_prob, help="sensitivity of observed exposure")
        g.add_argument("--phi", type=_prob, help="specificity of observed exposure")
        g.add_argument("--se-theta", type=float, default=None)
        g.add_argument("--se-phi", type=float, default=None)
        g.add_argument("--ppv", type=_prob)
        g.add_argument("--npv", type=_prob)
        g.add_argument("--ppv1", type=_prob, help="PPV among cases")
        g.add_argument("--npv1", type=_prob, help="NPV among cases")
        g.add_argument("--ppv0", type=_prob, help="PPV among non-cases")
        g.add_argument("--npv0", type=_prob, help="NPV among non-cases")

    e = sub.add_parser("estimate", help="naive and corrected ASpE with intervals")
    e.add_argument("data", help="member/index CSV")
    e.add_argument("--method", choices=("naive", "matrix", "inverse-matrix", "mle", "all"), default="all")
    e.add_argument("--variance", choices=("delta", "design-effect", "bootstrap", "all"), default="all")
    e.add_argument("--boot-reps", type=int, default=1000)
    e.add_argument("--icc-override", type=_prob, default=None)
    e.add_argument("--validation-scale", type=float, default=None,
                   help="extra delta/design-effect rows with the validation sample scaled by this factor")
    e.add_argument("--pooled-pv", action="store_true", help="inverse-matrix: pool PPV/NPV over case status")
    e.add_argument("--nodes", type=int, default=21, help="MLE quadrature nodes")
    e.add_argument("--allocation-prob", type=_prob, default=None)
    external(e)
    common(e)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run a scenario grid from a JSON config")
    s.add_argument("config")
    s.add_argument("--scale-k", type=float, default=None, help="multiply K by this factor")
    s.add_argument("--scale-reps", type=float, default=None, help="multiply replications by this factor")
    common(s, seed=False)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bias", help="analytic bias of the naive ASpE")
    b.add_argument("--p-y0", type=_prob, required=True)
    b.add_argument("--rr", type=float, required=True)
    b.add_argument("--p-m", type=_prob, required=True)
    b.add_argument("--p-r", type=_prob, required=True)
    common(b, seed=False, workers=False)
    b.set_defaults(func=cmd_bias)

    bs = sub.add_parser("bootstrap", help="network bootstrap of one estimator")
    bs.add_argument("data")
    bs.add_argument("--method", choices=("naive", "matrix", "inverse-matrix"), default="matrix")
    bs.add_argument("--boot-reps", type=int, default=1000)
    bs.add_argument("--ci", choices=("percentile", "wald"), default="percentile")
    bs.add_argument("--theta", type=_prob)
    bs.add_argument("--phi", type=_prob)
    bs.set_defaults(se_theta=None, se_phi=None)
    common(bs)
    bs.set_defaults(func=cmd_bootstrap)

    m = sub.add_parser("mle", help="observed-data maximum likelihood")
    m.add_argument("data")
    m.add_argument("--scale", choices=("RD", "RR", "both"), default="both")
    m.add_argument("--nodes", type=int, default=21)
    m.add_argument("--ppv", type=_prob)
    m.add_argument("--npv", type=_prob)
    m.add_argument("--differential", action="store_true",
                   help="case-specific predictive values (sensitivity analysis)")
    common(m, workers=False)
    m.set_defaults(func=cmd_mle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
