"""External misclassification parameters, validation size and the CLI.

Uses a simulated trial shaped like a small HIV-prevention network trial
(184 networks, 269 members, 38 validated members) to show

* how much of the corrected estimate's uncertainty comes from the small
  validation sample (delta SE at ``n_v`` and at ten times ``n_v``);
* correcting with sensitivity/specificity taken from an external study;
* the same analysis through the ``enrtspill`` command line.

Run with ``python demos/05_external_validation_and_cli.py``.
"""
# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from enrtspill import (MisclassModel, build_fourfold, delta_variance, estimate_misclassification,
                       generate_dataset, matrix_correct, naive_aspe, write_csv)
from enrtspill.sim import hptn_like_spec

spec = hptn_like_spec()
data = generate_dataset(spec, 0)
table = build_fourfold(data)
print(f"{data.n_members} members, {data.n_networks} networks, {int(data.v.sum())} validated")

# %% Internal validation: SE at the observed and at a ten-fold validation size
misclass = estimate_misclassification(data)
rd = matrix_correct(table, misclass.theta, misclass.phi).rd.point
print(f"naive RD {naive_aspe(table)[0].point:.3f}; matrix-corrected RD {rd:.3f}")
for scale in (1, 10):
    se = delta_variance(table, "matrix", misclass=misclass, validation_scale=scale).var_rd ** 0.5
    print(f"  delta SE with n_v x {scale:<2}: {se:.4f}")

# %% External sensitivity and specificity (with their standard errors)
external = MisclassModel(theta=0.60, phi=0.79, se_theta=0.05, se_phi=0.04, provenance="external")
corr = matrix_correct(table, external.theta, external.phi)
se = delta_variance(table, "matrix", misclass=external).var_rd ** 0.5
print(f"\nexternal theta/phi: corrected RD {corr.rd.point:.3f} (SE {se:.4f})", flush=True)

# %% The same through the command line: table output and a JSON report
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "trial.csv"
    write_csv(data, path)
    cli = [sys.executable, "-m", "enrtspill.cli"]
    subprocess.run(cli + ["estimate", str(path), "--method", "matrix", "--variance", "delta",
                          "--validation-scale", "10", "--format", "table"], check=True)
    out = subprocess.run(cli + ["bias", "--p-y0", "0.25", "--rr", "3", "--p-m", "0.75",
                                "--p-r", "0.5", "--format", "json"],
                         check=True, capture_output=True, text=True)
    bias = json.loads(out.stdout)["bias"]
    print(f"\nanalytic naive limits at P_M=0.75: RD {bias['delta_rd_star']:.3f}, "
          f"RR {bias['delta_rr_star']:.3f}")
