"""
Lead-lag detection by cross correlation
=======================================

Build a reference series and a noisy copy that trails it by four days,
then recover the delay from the peak of the cross-correlation function.
"""

import numpy as np

from gtmarkets.leadlag import cross_correlation

rng = np.random.default_rng(1)
n, delay = 75, 4

# a smooth "public concern" curve for the reference country
walk = np.cumsum(rng.normal(size=n + 20))
reference = walk[20:]
# the other country follows the same curve `delay` days later
follower = walk[20 - delay : 20 - delay + n] + 0.3 * rng.normal(size=n)

# lag k pairs follower[t] with reference[t + k]; the peak is at -delay,
# i.e. negative lags mean the reference leads
ccf = cross_correlation(follower, reference, max_lag=10)
print("peak lag:", ccf.peak_lag, "correlation: %.3f" % ccf.peak_value)
for k in range(-6, 1):
    print("%+3d  %.3f" % (k, ccf.at(k)))
