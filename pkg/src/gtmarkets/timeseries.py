"""Date-indexed series, panels, and the deterministic transforms applied to them.

Everything here is immutable: arrays held by a :class:`TimeSeries` are
flagged read-only, and every transform returns a new object.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np


class DomainError(ValueError):
    """Input lies outside the domain of a transform."""


class InsufficientDataError(ValueError):
    """Too few observations for the requested operation."""


class MissingObservationError(KeyError):
    """A required calendar date is absent from a series."""

    def __init__(self, date):
        self.date = date
        super().__init__(f"no observation for {date}")

    def __str__(self):
        return self.args[0]


class SchemaError(ValueError):
    """Malformed panel CSV (file and line are included in the message)."""


class Country(str, Enum):
    DE = "DE"
    FR = "FR"
    GB = "GB"
    US = "US"
    IT = "IT"
    ES = "ES"

    @classmethod
    def parse(cls, text: str) -> "Country":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown country code {text!r}") from None

    def __str__(self):
        return self.value


class Source(str, Enum):
    YOUTUBE = "youtube"
    NEWS = "news"
    SEARCH = "search"

    @classmethod
    def parse(cls, text: str) -> "Source":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown source {text!r}") from None

    def __str__(self):
        return self.value


class Kind(str, Enum):
    PRICE = "price"
    LOG_RETURN = "log_return"
    GT_RAW = "gt_raw"
    GT_SCALED = "gt_scaled"
    GT_UNIT = "gt_unit"
    CASES = "cases"
    IMPLIED_VOL = "implied_vol"
    GROWTH_RATE = "growth_rate"

    def __str__(self):
        return self.value


# Panel column order used in every table.
COUNTRY_ORDER = (Country.DE, Country.FR, Country.GB, Country.US, Country.IT, Country.ES)
SOURCE_ORDER = (Source.YOUTUBE, Source.NEWS, Source.SEARCH)


def as_dates(dates) -> np.ndarray:
    """Coerce ISO strings / ``date`` objects / datetime64 to ``datetime64[D]``."""
    return np.asarray(dates, dtype="datetime64[D]")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Real-valued observations on strictly increasing calendar dates.

    Missing observations are stored as NaN. ``degenerate`` marks a GT
    series whose raw input had zero range.
    """

    dates: np.ndarray
    values: np.ndarray
    kind: Kind
    degenerate: bool = False

    def __post_init__(self):
        dates = as_dates(self.dates).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        kind = Kind(self.kind)
        if dates.shape != values.shape:
            raise ValueError(
                f"dates ({dates.size}) and values ({values.size}) differ in length"
            )
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValueError("dates must be strictly increasing")
        finite = values[~np.isnan(values)]
        if kind is Kind.GT_SCALED:
            if np.any(finite != np.round(finite)) or np.any((finite < 0) | (finite > 100)):
                raise DomainError("gt_scaled values must be integers in [0, 100]")
        elif kind is Kind.GT_UNIT:
            if np.any((finite < 0) | (finite > 1)):
                raise DomainError("gt_unit values must lie in [0, 1]")
        elif kind is Kind.PRICE:
            if np.any(finite <= 0):
                raise DomainError("prices must be strictly positive")
        object.__setattr__(self, "dates", _frozen(dates))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "kind", kind)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        span = f"{self.dates[0]}..{self.dates[-1]}" if len(self) else "empty"
        return f"TimeSeries(kind={self.kind.value}, n={len(self)}, {span})"

    def equals(self, other: "TimeSeries") -> bool:
        return (
            self.kind is other.kind
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def with_values(self, values, kind=None, dates=None) -> "TimeSeries":
        return TimeSeries(
            self.dates if dates is None else dates,
            values,
            self.kind if kind is None else kind,
        )

    def window(self, start=None, end=None) -> "TimeSeries":
        """Observations with ``start <= date <= end`` (either bound optional)."""
        keep = np.ones(len(self), dtype=bool)
        if start is not None:
            keep &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            keep &= self.dates <= np.datetime64(end, "D")
        return TimeSeries(self.dates[keep], self.values[keep], self.kind, self.degenerate)


def log_returns(prices: TimeSeries) -> TimeSeries:
    """Log-returns ``ln P_t - ln P_{t-1}``, dated at the later observation."""
    if len(prices) < 2:
        raise InsufficientDataError("log returns need at least two prices")
    p = prices.values
    if np.any(~(p > 0)):
        raise DomainError("log returns need strictly positive prices")
    return TimeSeries(prices.dates[1:], np.diff(np.log(p)), Kind.LOG_RETURN)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def gt_rescale(raw: TimeSeries) -> TimeSeries:
    """Google-Trends style rescaling to integers in [0, 100].

    Subtract the minimum, divide by the (shifted) maximum, multiply by 100
    and round half away from zero. A constant series maps to all zeros and
    the result carries ``degenerate=True``.
    """
    v = raw.values
    if v.size < 1 or np.all(np.isnan(v)):
        raise InsufficientDataError("cannot rescale an empty series")
    lo, hi = np.nanmin(v), np.nanmax(v)
    span = hi - lo
    if span == 0:
        out = np.where(np.isnan(v), np.nan, 0.0)
        return TimeSeries(raw.dates, out, Kind.GT_SCALED, degenerate=True)
    out = _round_half_away(100.0 * (v - lo) / span)
    return TimeSeries(raw.dates, out, Kind.GT_SCALED)


def unit_rescale(scaled: TimeSeries) -> TimeSeries:
    v = scaled.values
    finite = v[~np.isnan(v)]
    if np.any((finite < 0) | (finite > 100)):
        raise DomainError("unit_rescale expects values in [0, 100]")
    return TimeSeries(scaled.dates, v / 100.0, Kind.GT_UNIT, scaled.degenerate)


def align_to_calendar(daily: TimeSeries, calendar) -> TimeSeries:
    """Restrict ``daily`` to the dates of ``calendar``.

    Every calendar date must be present; observations on other dates
    (weekends, holidays) are discarded rather than aggregated.
    """
    cal = as_dates(calendar).ravel()
    idx = np.searchsorted(daily.dates, cal)
    for i, d in zip(idx, cal):
        if i >= len(daily) or daily.dates[i] != d:
            raise MissingObservationError(str(d))
    return TimeSeries(cal, daily.values[idx], daily.kind, daily.degenerate)


def growth_rate(cases: TimeSeries) -> TimeSeries:
    """Relative change ``(CC_t - CC_{t-1}) / CC_{t-1}``.

    A zero previous count gives a missing value (NaN) unless the current
    count is also zero, in which case the growth is 0.
    """
    if len(cases) < 2:
        raise InsufficientDataError("growth rate needs at least two observations")
    c = cases.values
    if np.any(c[~np.isnan(c)] < 0):
        raise DomainError("case counts must be non-negative")
    prev, cur = c[:-1], c[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (cur - prev) / prev
    g = np.where((prev == 0) & (cur == 0), 0.0, g)
    g = np.where((prev == 0) & (cur > 0), np.nan, g)
    return TimeSeries(cases.dates[1:], g, Kind.GROWTH_RATE)


def first_principal_component(a: TimeSeries, b: TimeSeries, c: TimeSeries) -> TimeSeries:
    """Leading principal component of three series, min-max scaled to [0, 1].

    Inputs are standardized first, so the result does not depend on their
    location or (positive) scale. The sign is chosen so that the component
    correlates non-negatively with the average of the standardized inputs.
    """
    n = len(a)
    if len(b) != n or len(c) != n:
        raise ValueError("series must have equal length")
    if n < 3:
        raise InsufficientDataError("principal component needs at least 3 observations")
    X = np.column_stack([a.values, b.values, c.values])
    if np.any(np.isnan(X)):
        raise DomainError("principal component inputs must not contain missing values")
    sd = X.std(axis=0)
    if np.any(sd == 0) or np.any(sd < 1e-14 * np.abs(X).max(axis=0)):
        raise DomainError("principal component inputs need nonzero variance")
    Z = (X - X.mean(axis=0)) / sd
    corr = Z.T @ Z / n
    evals, evecs = np.linalg.eigh(corr)
    if evals[-1] - evals[-2] <= 1e-12 * evals[-1]:
        raise DomainError("leading eigenvalue is not simple; component is not unique")
    score = Z @ evecs[:, -1]
    if np.dot(score - score.mean(), Z.mean(axis=1)) < 0:
        score = -score
    lo, hi = score.min(), score.max()
    return TimeSeries(a.dates, (score - lo) / (hi - lo), Kind.GT_UNIT)


# ---------------------------------------------------------------------------
# Panel


SeriesKey = tuple  # (Country, Kind, Source | None)


@dataclass(frozen=True, eq=False)
class Panel:
    """Per-country series sharing one trading calendar.

    ``series`` is keyed by ``(country, kind, source)``; market series
    (prices, returns, cases, implied vol) use ``source=None``. Returns
    and growth rates are stored on ``calendar[1:]``.
    """

    calendar: np.ndarray
    series: Mapping[SeriesKey, TimeSeries] = field(default_factory=dict)

    def __post_init__(self):
        cal = _frozen(as_dates(self.calendar).ravel())
        object.__setattr__(self, "calendar", cal)
        object.__setattr__(self, "series", dict(self.series))
        for key, ts in self.series.items():
            if not np.array_equal(ts.dates, self._dates_for(ts.kind)):
                raise ValueError(f"series {_fmt_key(key)} is not aligned to the panel calendar")

    def _dates_for(self, kind: Kind) -> np.ndarray:
        return self.calendar[1:] if kind in (Kind.LOG_RETURN, Kind.GROWTH_RATE) else self.calendar

    @property
    def countries(self) -> list:
        present = {k[0] for k in self.series}
        return [c for c in COUNTRY_ORDER if c in present]

    @property
    def sources(self) -> list:
        present = {k[2] for k in self.series if k[2] is not None}
        return [s for s in SOURCE_ORDER if s in present]

    def get(self, country, kind, source=None) -> TimeSeries:
        key = (Country(country), Kind(kind), None if source is None else Source(source))
        try:
            return self.series[key]
        except KeyError:
            raise KeyError(f"panel has no series {_fmt_key(key)}") from None

    def has(self, country, kind, source=None) -> bool:
        key = (Country(country), Kind(kind), None if source is None else Source(source))
        return key in self.series

    def to_csv(self) -> str:
        return write_series_csv(self.series)

    @classmethod
    def from_csv(cls, text: str, path: str = "<panel>") -> "Panel":
        series = read_series_csv(text, path)
        lengths = {}
        for key, ts in series.items():
            lengths.setdefault(ts.kind in (Kind.LOG_RETURN, Kind.GROWTH_RATE), []).append(ts)
        full = lengths.get(False)
        if not full:
            raise SchemaError(f"{path}: panel holds no level series to define the calendar")
        return cls(full[0].dates, series)


def _fmt_key(key) -> str:
    country, kind, source = key
    return f"{country}/{kind}" + (f"/{source}" if source is not None else "")


# ---------------------------------------------------------------------------
# CSV exchange format: date,country,source,kind,value

CSV_HEADER = ["date", "country", "source", "kind", "value"]


def read_series_csv(text: str, path: str = "<csv>") -> dict:
    """Parse the long-format CSV into ``{(country, kind, source): TimeSeries}``.

    Raises :class:`SchemaError` with ``path:line`` on any violation,
    including duplicate ``(date, country, source, kind)`` rows.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty file") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise SchemaError(f"{path}:1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
    rows: dict = {}
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != 5:
            raise SchemaError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
        d, country, source, kind, value = (f.strip() for f in row)
        try:
            date = np.datetime64(d, "D")
            if len(d) != 10:
                raise ValueError
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: bad ISO date {d!r}") from None
        try:
            key = (
                Country.parse(country),
                Kind(kind),
                Source.parse(source) if source else None,
            )
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
        if value == "":
            v = math.nan
        else:
            try:
                v = float(value)
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: bad number {value!r}") from None
        if (date, key) in seen:
            raise SchemaError(f"{path}:{lineno}: duplicate row for {d} {_fmt_key(key)}")
        seen.add((date, key))
        rows.setdefault(key, []).append((date, v))
    out = {}
    for key, obs in rows.items():
        obs.sort(key=lambda o: o[0])
        dates = np.array([o[0] for o in obs], dtype="datetime64[D]")
        try:
            out[key] = TimeSeries(dates, [o[1] for o in obs], key[1])
        except ValueError as exc:
            raise SchemaError(f"{path}: series {_fmt_key(key)}: {exc}") from None
    return out


def _fmt_value(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_series_csv(series: Mapping[SeriesKey, TimeSeries]) -> str:
    """Serialize series in a canonical order (country, source, kind, date)."""

    def order(key):
        country, kind, source = key
        return (
            COUNTRY_ORDER.index(country),
            -1 if source is None else SOURCE_ORDER.index(source),
            list(Kind).index(kind),
        )

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for key in sorted(series, key=order):
        country, kind, source = key
        ts = series[key]
        for d, v in zip(ts.dates, ts.values):
            w.writerow([str(d), country.value, "" if source is None else source.value, kind.value, _fmt_value(v)])
    return buf.getvalue()


def weekdays(start, end) -> np.ndarray:
    """Monday-Friday dates in ``[start, end]``."""
    days = np.arange(np.datetime64(start, "D"), np.datetime64(end, "D") + 1)
    return days[np.is_busday(days)]


def inner_join(*series: TimeSeries) -> list:
    """Restrict every series to the dates they all share."""
    common = series[0].dates
    for ts in series[1:]:
        common = np.intersect1d(common, ts.dates)
    out = []
    for ts in series:
        idx = np.searchsorted(ts.dates, common)
        out.append(TimeSeries(common, ts.values[idx], ts.kind, ts.degenerate))
    return out
