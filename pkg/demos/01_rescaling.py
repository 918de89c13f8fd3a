"""
Google Trends style rescaling
=============================

Raw search volumes are only ever published relative to their own peak.
This script walks a toy series through the two rescaling steps used
throughout the package.
"""

import numpy as np

from gtmarkets.timeseries import Kind, TimeSeries, gt_rescale, unit_rescale, weekdays

# a raw, arbitrary-scale series on ten days
days = np.arange(np.datetime64("2020-02-17"), np.datetime64("2020-02-27"))
raw = TimeSeries(days, [3.0, 3.5, 4.0, 9.0, 20.0, 41.0, 38.0, 60.0, 55.0, 80.0], Kind.GT_RAW)

# integers in [0, 100], minimum at 0 and peak at 100
scaled = gt_rescale(raw)
print("0-100 index:", scaled.values.astype(int).tolist())

# the regressions use the [0, 1] version
unit = unit_rescale(scaled)
print("unit index: ", unit.values.tolist())

# a flat series carries no information: it becomes all zeros and is flagged
flat = gt_rescale(TimeSeries(days, np.full(10, 7.0), Kind.GT_RAW))
print("flat series degenerate:", flat.degenerate)

# the trading calendar used by the pipeline is weekdays only
print("weekdays in the window:", weekdays("2020-02-17", "2020-02-26").size)
