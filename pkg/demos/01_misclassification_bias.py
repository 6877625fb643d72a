"""How network misclassification biases the naive spillover estimate.

Members recorded in the wrong network receive the wrong spillover exposure.
With recording probability ``P_M`` and a fraction ``P_R`` of networks whose
index is treated, exposure is classified with sensitivity and specificity

    theta = P_M + (1 - P_M) P_R,    phi = P_M + (1 - P_M)(1 - P_R).

The naive risk difference is attenuated by exactly ``P_M``, so its relative
bias is ``1 - P_M``; the risk ratio is pulled toward 1 by an amount that
depends on ``P_R`` and the true ratio but not on the baseline risk.

Run with ``python demos/01_misclassification_bias.py``.
"""
# %%
from enrtspill import MisclassModel, analytic_bias

# %% Sensitivity / specificity implied by the generative parameters
model = MisclassModel.from_pm(p_m=0.75, p_r=0.3)
print(f"P_M=0.75, P_R=0.3:  theta={model.theta:.3f}, phi={model.phi:.3f}, "
      f"theta+phi-1={model.theta + model.phi - 1:.3f}")

# %% Relative bias of the naive RD equals 1 - P_M, whatever the outcome model
print("\n1-P_M   rel.bias RD   naive RR (true RR = 3, P_Y0 = 0.25)")
for one_minus in (0.10, 0.25, 0.50, 0.75, 0.90):
    rep = analytic_bias(p_y0=0.25, rr=3.0, p_m=1 - one_minus, p_r=0.5)
    print(f"{one_minus:5.2f}   {rep.rel_bias_rd:11.4f}   {rep.delta_rr_star:8.4f}")

# %% The RR attenuation depends on P_R; baseline risk cancels out of the ratio
print("\nP_R    naive RR (P_Y0=0.1)   naive RR (P_Y0=0.4)   (P_M = 0.5, true RR = 2)")
for p_r in (0.1, 0.3, 0.5, 0.7, 0.9):
    lo = analytic_bias(p_y0=0.1, rr=2.0, p_m=0.5, p_r=p_r)
    hi = analytic_bias(p_y0=0.4, rr=2.0, p_m=0.5, p_r=p_r)
    print(f"{p_r:4.2f}   {lo.delta_rr_star:19.4f}   {hi.delta_rr_star:19.4f}")
