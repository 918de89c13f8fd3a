"""
AR(1)-X regression with robust standard errors
==============================================

Simulate daily returns driven by an attention index, fit
``y_t = a + b GT_t + d y_{t-1} + e_t`` and print a journal-style table.
"""

import numpy as np

from gtmarkets.regress import SEKind, fit_arx, format_results_table

rng = np.random.default_rng(2)
n = 75
gt = np.clip(np.linspace(0, 1, n) + 0.1 * rng.normal(size=n), 0, 1)

y = np.zeros(n)
for t in range(1, n):
    y[t] = 0.004 - 0.05 * gt[t] - 0.2 * y[t - 1] + 0.015 * rng.normal()

# HC1 is the default; Newey-West is available with an explicit bandwidth
hc1 = fit_arx(y, gt)
nw = fit_arx(y, gt, SEKind("NeweyWest", 3))
print(format_results_table({"IT": hc1}, "HC1"))
print(format_results_table({"IT": nw}, "Newey-West(3)"))

# stars use two-sided Student-t p-values by default; one-sided is optional
print("p(GT) two-sided %.3g, one-sided %.3g" % (hc1.p_values["GT"], fit_arx(y, gt, tails=1).p_values["GT"]))
