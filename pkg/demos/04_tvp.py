"""
Time-varying sensitivity via a Kalman smoother
==============================================

Simulate returns whose loading on the attention index drifts as an AR(1)
process, estimate the model by maximum likelihood and compare the
smoothed path with the truth.
"""

import numpy as np

from gtmarkets.tvp import TvpOptions, TvpParams, fit_tvp_mle, simulate

rng = np.random.default_rng(3)
truth = TvpParams(alpha=0.0, delta=-0.2, sigma2=1e-4, A=0.95, B=1e-4)
gt = rng.uniform(size=600)
y, beta = simulate(truth, gt, rng=rng)

fit = fit_tvp_mle(y, gt, TvpOptions(n_starts=4, seed=0))
p = fit.params
print("estimated: sigma2=%.2e  A=%.3f  B=%.2e" % (p.sigma2, p.A, p.B))
print("converged:", fit.converged)

# smoothed_mean[i] is the loading at t = i + 1, aligned with `beta`
err = fit.smoothed_mean - beta
inside = np.abs(err) <= 1.96 * fit.smoothed_sd
print("RMSE of smoothed path: %.4f" % np.sqrt(np.mean(err ** 2)))
print("share of true path inside the 95%% band: %.2f" % inside.mean())
