"""Seeded synthetic inputs shaped like the original study (6 countries x 3 sources x 75 days).

The real market and Trends data cannot be redistributed. These fixtures
follow the same file formats so the whole pipeline runs offline.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gtrends import COVID_TOPIC, Gprop, TrendsCache, build_query, serialize_payload
from .timeseries import (
    COUNTRY_ORDER,
    SOURCE_ORDER,
    Country,
    Kind,
    Source,
    TimeSeries,
    gt_rescale,
    weekdays,
    write_series_csv,
)

DATE_FROM = "2020-01-01"
DATE_TO = "2020-04-14"

GPROP_FOR_SOURCE = {Source.YOUTUBE: Gprop.YOUTUBE, Source.NEWS: Gprop.NEWS, Source.SEARCH: Gprop.ALL}

# Days by which each country's concern trails Italy's (per source).
DELAYS = {
    Source.YOUTUBE: {"DE": 3, "FR": 4, "GB": 6, "US": 4, "IT": 0, "ES": 3},
    Source.NEWS: {"DE": 3, "FR": 5, "GB": 7, "US": 5, "IT": 0, "ES": 3},
    Source.SEARCH: {"DE": 4, "FR": 6, "GB": 8, "US": 6, "IT": 0, "ES": 3},
}
CASE_ONSET = {"DE": 27, "FR": 23, "GB": 30, "US": 20, "IT": 29, "ES": 31}


def _concern(day: np.ndarray) -> np.ndarray:
    """Italian attention curve by day-of-year offset: a late-January blip and a March surge."""
    blip = 0.15 * np.exp(-0.5 * ((day - 22) / 3.0) ** 2)
    rise = 1.0 / (1.0 + np.exp(-(day - 58) / 4.0))
    fade = np.exp(-np.clip(day - 75, 0, None) / 40.0)
    return 0.02 + blip + rise * fade


def trends_fixtures(rng: np.random.Generator) -> dict:
    """Daily ``gt_scaled`` series keyed by (country code, source)."""
    days = np.arange(np.datetime64(DATE_FROM), np.datetime64(DATE_TO) + 1)
    offset = np.arange(days.size, dtype=float)
    out = {}
    for source in SOURCE_ORDER:
        for c in COUNTRY_ORDER:
            level = _concern(offset - DELAYS[source][c.value])
            raw = level * (1.0 + 0.08 * rng.standard_normal(days.size)) + 0.01 * rng.random(days.size)
            out[(c.value, source)] = gt_rescale(TimeSeries(days, np.maximum(raw, 0.0), Kind.GT_RAW))
    return out


def market_fixtures(rng: np.random.Generator, gt_it: np.ndarray, gt_own: dict, calendar: np.ndarray):
    """Prices and implied vol on ``calendar``; returns load on the Italian index.

    ``gt_it`` is the Italian YouTube index in [0, 1] on the calendar and
    ``gt_own`` maps country code to its own index (drives implied vol).
    """
    n = calendar.size
    stress = np.clip(gt_it, 0, 1)
    prices, iv = {}, {}
    for i, c in enumerate(COUNTRY_ORDER):
        alpha = 0.004 + 0.001 * i
        delta = -0.1 - 0.05 * (i % 3)
        beta = -0.02 - 0.05 * stress
        sd = 0.006 + 0.025 * stress
        r = np.empty(n)
        r[0] = 0.0
        for t in range(1, n):
            r[t] = alpha + beta[t] * gt_it[t] + delta * r[t - 1] + sd[t] * rng.standard_normal()
        prices[c.value] = 100.0 * (1 + i) * np.exp(np.cumsum(r))
        vol_noise = np.exp(0.25 * rng.standard_normal(n))
        iv[c.value] = (0.12 + 0.3 * gt_own[c.value]) * vol_noise
    return prices, iv


def case_fixtures(rng: np.random.Generator) -> dict:
    """Cumulative confirmed cases, daily including weekends."""
    days = np.arange(np.datetime64(DATE_FROM), np.datetime64(DATE_TO) + 1)
    offset = np.arange(days.size, dtype=float)
    out = {}
    for c in COUNTRY_ORDER:
        onset = CASE_ONSET[c.value]
        growth = 0.22 + 0.03 * rng.random()
        level = np.where(offset >= onset, np.exp(growth * (offset - onset)), 0.0)
        level = 150_000 * level / (level + 60_000.0)
        out[c.value] = np.floor(level + 0.999 * (level > 0))
    return days, out


def write_fixture_set(root, seed: int = 20200414) -> Path:
    """Write prices, cases, implied vol, Trends payloads and a config into ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    calendar = weekdays(DATE_FROM, DATE_TO)

    gt = trends_fixtures(rng)
    cache = TrendsCache(root / "gtrends")
    for (country, source), series in gt.items():
        q = build_query(COVID_TOPIC, DATE_FROM, DATE_TO, country, GPROP_FOR_SOURCE[source])
        cache.store(q, serialize_payload(series).encode(), "synthetic")

    idx = np.searchsorted(gt[("IT", Source.YOUTUBE)].dates, calendar)
    gt_own = {c.value: gt[(c.value, Source.YOUTUBE)].values[idx] / 100.0 for c in COUNTRY_ORDER}
    prices, iv = market_fixtures(rng, gt_own["IT"], gt_own, calendar)
    days, cases = case_fixtures(rng)

    def dump(name, kind, dates, table):
        series = {(Country(c), kind, None): TimeSeries(dates, v, kind) for c, v in table.items()}
        (root / name).write_text(write_series_csv(series))

    dump("prices.csv", Kind.PRICE, calendar, prices)
    dump("implied_vol.csv", Kind.IMPLIED_VOL, calendar, iv)
    dump("cases.csv", Kind.CASES, days, cases)
    (root / "config.toml").write_text(FIXTURE_CONFIG.format(seed=seed))
    (root / "README.txt").write_text(
        "Synthetic inputs generated by gtmarkets.synthetic.write_fixture_set"
        f"(seed={seed}).\nNot real market or search data.\n"
    )
    return root


FIXTURE_CONFIG = """\
# Synthetic fixture run; paths are relative to this file.
[data]
prices = "prices.csv"
cases = "cases.csv"
implied_vol = "implied_vol.csv"
gt_cache = "gtrends"

[run]
date_from = "2020-01-01"
date_to = "2020-04-14"
countries = ["DE", "FR", "GB", "US", "IT", "ES"]
sources = ["youtube", "news", "search"]
seed = {seed}
out = "run"

[gtrends]
topic = "/m/01cpyy"
mode = "offline"

[leadlag]
reference = "IT"
max_lag = 15

[regress]
source = "youtube"
se = "hc1"

[tvp]
source = "youtube"
gt = "own"
n_starts = 8
prior_var = 1e6
"""


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "fixtures/synthetic"
    print(json.dumps(str(write_fixture_set(target))))
