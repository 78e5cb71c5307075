"""Fit metrics on their own: error measures, mixing, information criteria.

The point metrics compare observed counts against posterior-mean cell
rates; MAPE skips zero-count cells entirely.  ESS uses paired-sum
truncation of the autocorrelations, and the information criteria come
from the stored per-draw, per-cell log likelihoods.
"""

import numpy as np

from argfrailty import RandomStream, dic_waic, ess, mae, mape, medae, poisson_log_lik

print("=== Point metrics ===")
y = np.array([4.0, 0.0, 9.0, 2.0, 7.0])
y_hat = np.array([5.0, 0.5, 7.5, 2.0, 8.0])
print(f"observations    {y}")
print(f"fitted          {y_hat}")
print(f"MAE   {mae(y, y_hat):.3f}")
print(f"MAPE  {mape(y, y_hat):.2f}%  (the zero cell is excluded)")
print(f"MedAE {medae(y, y_hat):.3f}")

print()
print("=== Effective sample size ===")
gen = RandomStream(31).gen
iid = gen.standard_normal(5000)
print(f"iid series of 5000: ESS {ess(iid):.0f}")
phi = 0.9
ar = np.empty(20000)
ar[0] = gen.standard_normal()
for i in range(1, ar.size):
    ar[i] = phi * ar[i - 1] + gen.standard_normal()
print(f"AR(1) phi=0.9 of {ar.size}: ESS {ess(ar):.0f} "
      f"(theory ~ {ar.size * (1 - phi) / (1 + phi):.0f})")

print()
print("=== DIC and WAIC from log likelihoods ===")
rates = gen.gamma(4.0, 1.5, size=(200, 30))  # pretend per-draw cell rates
counts = gen.poisson(6.0, size=30)
log_lik = np.stack([poisson_log_lik(counts, rates[s]) for s in range(200)])
plugin = poisson_log_lik(counts, rates.mean(axis=0))
crit = dic_waic(log_lik, plugin)
print(f"DIC  {crit.dic:.2f}  with p_d {crit.p_d:.2f}")
print(f"WAIC {crit.waic:.2f}  with p_w {crit.p_w:.2f}")
