"""Lagged cross-correlation and the lead-lag table against a reference country.

Convention: the correlation at lag ``k`` pairs ``x[t]`` with ``y[t + k]``.
With ``y`` the reference series, a negative peak lag means the reference
leads ``x``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .timeseries import (
    COUNTRY_ORDER,
    SOURCE_ORDER,
    Country,
    InsufficientDataError,
    Kind,
    Panel,
    Source,
    TimeSeries,
)

DEFAULT_MAX_LAG = 15
TIE_TOL = 1e-12

SOURCE_LABELS = {
    Source.YOUTUBE: "YouTube",
    Source.NEWS: "Google News",
    Source.SEARCH: "Google Search",
}


class UndefinedCorrelationError(ValueError):
    def __init__(self, lag):
        self.lag = lag
        super().__init__(f"correlation undefined at lag {lag}: constant overlap window")


@dataclass(frozen=True, eq=False)
class CcfResult:
    lags: np.ndarray
    correlations: np.ndarray
    peak_lag: int
    peak_value: float

    def at(self, lag: int) -> float:
        return float(self.correlations[lag + self.lags[-1]])


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, TimeSeries) else x, dtype=float)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb = a @ a, b @ b
    if saa == 0 or sbb == 0:
        return np.nan
    return float(a @ b / np.sqrt(saa * sbb))


def pick_peak(lags: np.ndarray, corr: np.ndarray) -> int:
    """Argmax of the signed correlation.

    Values within ``TIE_TOL`` of the maximum tie; ties go to the smallest
    ``|k|`` and then to the negative lag.
    """
    best = np.max(corr)
    tied = lags[corr >= best - TIE_TOL]
    return int(min(tied, key=lambda k: (abs(k), k)))


def cross_correlation(x, y, max_lag: int = DEFAULT_MAX_LAG) -> CcfResult:
    """Pearson correlation of ``(x[t], y[t+k])`` for ``k`` in ``[-L, L]``.

    Each lag uses the mean and variance of its own overlap window.
    """
    xv, yv = _values(x), _values(y)
    n = xv.size
    if yv.size != n:
        raise ValueError(f"series lengths differ ({n} vs {yv.size})")
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if n - max_lag < 3:
        raise InsufficientDataError(f"n={n} is too short for max_lag={max_lag}")
    if np.any(np.isnan(xv)) or np.any(np.isnan(yv)):
        raise ValueError("cross_correlation does not accept missing values")
    lags = np.arange(-max_lag, max_lag + 1)
    corr = np.empty(lags.size)
    for i, k in enumerate(lags):
        if k >= 0:
            r = _pearson(xv[: n - k], yv[k:])
        else:
            r = _pearson(xv[-k:], yv[: n + k])
        if np.isnan(r):
            raise UndefinedCorrelationError(int(k))
        corr[i] = r
    peak = pick_peak(lags, corr)
    return CcfResult(lags, corr, peak, float(corr[peak + max_lag]))


@dataclass(frozen=True, eq=False)
class LeadLagTable:
    """Peak lags by (source, country); failed cells hold ``None`` plus a message."""

    reference: Country
    sources: list
    countries: list
    peaks: dict
    errors: dict = field(default_factory=dict)

    def cell(self, source, country):
        return self.peaks[(Source(source), Country(country))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", *[c.value for c in self.countries]])
        for s in self.sources:
            w.writerow([s.value, *[_cell_text(self.peaks[(s, c)]) for c in self.countries]])
        return buf.getvalue()

    def render(self) -> str:
        rows = [["", *[c.value for c in self.countries]]]
        for s in self.sources:
            rows.append([SOURCE_LABELS[s], *[_cell_text(self.peaks[(s, c)]) for c in self.countries]])
        first = max(len(r[0]) for r in rows)
        width = max(len(x) for r in rows for x in r[1:])
        lines = [
            r[0].ljust(first) + " | " + " ".join(x.rjust(width) for x in r[1:]) for r in rows
        ]
        lines.insert(1, "-" * len(lines[0]))
        notes = [f"! {s.value}/{c.value}: {msg}" for (s, c), msg in self.errors.items()]
        return "\n".join(lines + notes) + "\n"


def _cell_text(v) -> str:
    return "NA" if v is None else str(v)


def leadlag_table(
    panel: Panel,
    reference: Country = Country.IT,
    max_lag: int = DEFAULT_MAX_LAG,
    sources=None,
) -> LeadLagTable:
    """Peak lag of each country's GT level series against the reference's.

    Cells whose correlation cannot be computed are reported in ``errors``
    instead of aborting the table.
    """
    reference = Country(reference)
    sources = [Source(s) for s in (sources or panel.sources)]
    countries = [c for c in COUNTRY_ORDER if c in panel.countries and c is not reference]
    peaks, errors = {}, {}
    for s in sources:
        if not panel.has(reference, Kind.GT_UNIT, s):
            raise KeyError(f"reference {reference.value} has no {s.value} series")
        ref = panel.get(reference, Kind.GT_UNIT, s)
        for c in countries:
            try:
                peaks[(s, c)] = cross_correlation(panel.get(c, Kind.GT_UNIT, s), ref, max_lag).peak_lag
            except (ValueError, KeyError) as exc:
                peaks[(s, c)] = None
                errors[(s, c)] = str(exc)
    if not countries:
        raise ValueError("panel needs at least one non-reference country")
    ordered = [s for s in SOURCE_ORDER if s in sources]
    return LeadLagTable(reference, ordered, countries, peaks, errors)
