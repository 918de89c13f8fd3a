"""Pipeline stages (ingest, ccf, reg, tvp, report) and the run manifest.

Every stage reads its inputs from files (the raw data or the persisted
panel) and writes its artifacts atomically into the output directory, so
any stage can be rerun on its own.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .gtrends import COVID_TOPIC, Gprop, TrendsCache, atomic_write, build_query, fetch_with_cache
from .leadlag import DEFAULT_MAX_LAG, leadlag_table
from .regress import SEKind, fit_arx, fit_arx_controls, format_results_table, results_to_csv
from .timeseries import (
    COUNTRY_ORDER,
    SOURCE_ORDER,
    Country,
    Kind,
    Panel,
    SchemaError,
    Source,
    align_to_calendar,
    growth_rate,
    gt_rescale,
    log_returns,
    read_series_csv,
    unit_rescale,
)
from .tvp import StatePrior, TvpOptions, event_overlay, fit_tvp_mle

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

GPROP_FOR_SOURCE = {Source.YOUTUBE: Gprop.YOUTUBE, Source.NEWS: Gprop.NEWS, Source.SEARCH: Gprop.ALL}
MODELS = ("own_gt", "italy_gt", "controls")
PANEL_FILE = "panel.csv"
MANIFEST_FILE = "manifest.json"


class StageError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    prices: Path
    out: Path
    cases: Path | None = None
    implied_vol: Path | None = None
    gt_csv: Path | None = None
    gt_cache: Path | None = None
    gt_fixtures: list = field(default_factory=list)
    gt_mode: str = "online"
    gt_base_url: str | None = None
    topic: str = COVID_TOPIC
    date_from: dt.date = dt.date(2020, 1, 1)
    date_to: dt.date = dt.date(2020, 4, 14)
    countries: list = field(default_factory=lambda: list(COUNTRY_ORDER))
    sources: list = field(default_factory=lambda: list(SOURCE_ORDER))
    reference: Country = Country.IT
    max_lag: int = DEFAULT_MAX_LAG
    reg_source: Source = Source.YOUTUBE
    se_kind: SEKind = SEKind("HC1")
    tails: int = 2
    tvp_source: Source = Source.YOUTUBE
    tvp_gt: str = "own"
    tvp_starts: int = 8
    tvp_prior_var: float = 1e6
    tvp_fixed: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.date_from > self.date_to:
            raise ValueError("date_from is after date_to")
        if not self.sources:
            raise ValueError("select at least one source")
        if self.tails not in (1, 2):
            raise ValueError("regress.tails must be 1 or 2")
        if self.tvp_gt not in ("own", "italy"):
            raise ValueError("tvp.gt must be 'own' or 'italy'")

    @classmethod
    def load(cls, path, **overrides) -> "PipelineConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        base = path.resolve().parent

        def rel(p):
            return None if p in (None, "") else (base / p).resolve()

        data, run = raw.get("data", {}), raw.get("run", {})
        gtr, ll = raw.get("gtrends", {}), raw.get("leadlag", {})
        reg, tvp = raw.get("regress", {}), raw.get("tvp", {})
        if "prices" not in data:
            raise ValueError(f"{path}: [data] prices is required")
        kw = dict(
            prices=rel(data["prices"]),
            cases=rel(data.get("cases")),
            implied_vol=rel(data.get("implied_vol")),
            gt_csv=rel(data.get("gt_csv")),
            gt_cache=rel(data.get("gt_cache")),
            gt_fixtures=[rel(p) for p in data.get("gt_fixtures", [])],
            out=rel(run.get("out", "run")),
            gt_mode=gtr.get("mode", "online"),
            gt_base_url=gtr.get("base_url"),
            topic=gtr.get("topic", COVID_TOPIC),
            date_from=dt.date.fromisoformat(str(run.get("date_from", "2020-01-01"))),
            date_to=dt.date.fromisoformat(str(run.get("date_to", "2020-04-14"))),
            countries=[Country.parse(c) for c in run.get("countries", [c.value for c in COUNTRY_ORDER])],
            sources=[Source.parse(s) for s in run.get("sources", [s.value for s in SOURCE_ORDER])],
            seed=int(run.get("seed", 0)),
            reference=Country.parse(ll.get("reference", "IT")),
            max_lag=int(ll.get("max_lag", DEFAULT_MAX_LAG)),
            reg_source=Source.parse(reg.get("source", "youtube")),
            se_kind=SEKind.parse(reg.get("se", "hc1"), reg.get("nw_lags")),
            tails=int(reg.get("tails", 2)),
            tvp_source=Source.parse(tvp.get("source", "youtube")),
            tvp_gt=tvp.get("gt", "own"),
            tvp_starts=int(tvp.get("n_starts", 8)),
            tvp_prior_var=float(tvp.get("prior_var", 1e6)),
            tvp_fixed={k: float(v) for k, v in tvp.get("fixed", {}).items()},
            raw=raw,
        )
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def snapshot(self) -> dict:
        def conv(v):
            if isinstance(v, (Path, dt.date, SEKind)):
                return str(v)
            if isinstance(v, (Country, Source)):
                return v.value
            if isinstance(v, list):
                return [conv(x) for x in v]
            return v

        return {k: conv(v) for k, v in self.__dict__.items() if k != "raw"}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects artifacts, inputs and stage outcomes for one invocation."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list = []
        self.inputs: dict = {}
        self.stages: dict = {}
        self.started_at = _now()

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        atomic_write(path, text.encode("utf-8"))
        if name not in self.artifacts:
            self.artifacts.append(name)
        return path

    def note_input(self, path) -> None:
        if path is not None and Path(path).exists():
            self.inputs[str(path)] = sha256_file(path)

    @property
    def failed(self) -> bool:
        return any(status != "ok" for status in self.stages.values())

    def write_manifest(self) -> Path:
        manifest = {
            "tool": "gtmarkets",
            "version": __version__,
            "started_at": self.started_at,
            "finished_at": _now(),
            "config": self.config.snapshot(),
            "inputs": dict(sorted(self.inputs.items())),
            "stages": self.stages,
            "artifacts": [
                {"path": name, "sha256": sha256_file(self.out / name),
                 "bytes": (self.out / name).stat().st_size}
                for name in sorted(self.artifacts)
            ],
        }
        path = self.out / MANIFEST_FILE
        atomic_write(path, (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
        return path


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# Stages


def _read_kind(path, kind: Kind, run: Run) -> dict:
    run.note_input(path)
    text = Path(path).read_text()
    series = read_series_csv(text, str(path))
    out = {}
    for (country, k, _source), ts in series.items():
        if k is not kind:
            raise SchemaError(f"{path}: expected only kind={kind.value}, found {k.value}")
        out[country] = ts
    return out


def _calendar(prices: dict, config: PipelineConfig) -> np.ndarray:
    calendar = None
    for c in config.countries:
        if c not in prices:
            raise StageError(f"no price data for country {c.value} in {config.prices}")
        d = prices[c].window(config.date_from, config.date_to).dates
        calendar = d if calendar is None else np.intersect1d(calendar, d)
    if calendar is None or calendar.size < 3:
        raise StageError("trading calendar has fewer than 3 dates in the selected range")
    return calendar


def _load_trends(config: PipelineConfig, run: Run, calendar) -> dict:
    """GT level series in [0, 1] on the calendar, keyed by (country, source)."""
    out = {}
    if config.gt_csv is not None:
        run.note_input(config.gt_csv)
        table = read_series_csv(Path(config.gt_csv).read_text(), str(config.gt_csv))
        for (c, kind, s), ts in table.items():
            if s is None or c not in config.countries or s not in config.sources:
                continue
            if kind is Kind.GT_RAW:
                ts = gt_rescale(ts.window(config.date_from, config.date_to))
            if kind in (Kind.GT_RAW, Kind.GT_SCALED):
                ts = unit_rescale(ts)
            elif kind is not Kind.GT_UNIT:
                raise SchemaError(f"{config.gt_csv}: unexpected kind {kind.value}")
            out[(c, s)] = ts
    else:
        cache_dir = config.gt_cache or (Path(config.out) / "gt_cache")
        cache = TrendsCache(cache_dir, config.gt_fixtures)
        for c in config.countries:
            for s in config.sources:
                q = build_query(config.topic, config.date_from, config.date_to, c.value, GPROP_FOR_SOURCE[s])
                res = fetch_with_cache(
                    q, cache_dir, config.gt_mode, base_url=config.gt_base_url,
                    fixture_dirs=config.gt_fixtures,
                )
                for base in [cache.root, *cache.fixture_dirs]:
                    run.note_input(Path(base) / f"{q.cache_key}.json")
                out[(c, s)] = unit_rescale(res.series)
    for c in config.countries:
        for s in config.sources:
            if (c, s) not in out:
                raise StageError(f"no {s.value} GT series for country {c.value}")
            out[(c, s)] = align_to_calendar(out[(c, s)], calendar)
    return out


def cmd_ingest(config: PipelineConfig, run: Run) -> Panel:
    prices = _read_kind(config.prices, Kind.PRICE, run)
    calendar = _calendar(prices, config)
    series = {}
    for c in config.countries:
        p = align_to_calendar(prices[c], calendar)
        series[(c, Kind.PRICE, None)] = p
        series[(c, Kind.LOG_RETURN, None)] = log_returns(p)
    for (c, s), ts in _load_trends(config, run, calendar).items():
        series[(c, Kind.GT_UNIT, s)] = ts
    if config.cases is not None:
        cases = _read_kind(config.cases, Kind.CASES, run)
        for c in config.countries:
            if c not in cases:
                raise StageError(f"no case data for country {c.value} in {config.cases}")
            aligned = align_to_calendar(cases[c], calendar)
            series[(c, Kind.CASES, None)] = aligned
            series[(c, Kind.GROWTH_RATE, None)] = growth_rate(aligned)
    if config.implied_vol is not None:
        iv = _read_kind(config.implied_vol, Kind.IMPLIED_VOL, run)
        for c in config.countries:
            if c not in iv:
                raise StageError(f"no implied-vol data for country {c.value} in {config.implied_vol}")
            series[(c, Kind.IMPLIED_VOL, None)] = align_to_calendar(iv[c], calendar)
    panel = Panel(calendar, series)
    run.write(PANEL_FILE, panel.to_csv())
    log.info("panel: %d countries x %d sources x %d dates",
             len(panel.countries), len(panel.sources), calendar.size)
    return panel


def load_panel(config: PipelineConfig) -> Panel:
    path = Path(config.out) / PANEL_FILE
    if not path.exists():
        raise StageError(f"{path} not found; run 'ingest' first")
    return Panel.from_csv(path.read_text(), str(path))


def cmd_ccf(config: PipelineConfig, run: Run, panel: Panel | None = None):
    panel = panel or load_panel(config)
    table = leadlag_table(panel, config.reference, config.max_lag, config.sources)
    run.write("leadlag.csv", table.to_csv())
    run.write("leadlag.txt", table.render())
    return table


def _gt_for(panel: Panel, country, source, italy: bool):
    return panel.get(Country.IT if italy else country, Kind.GT_UNIT, source)


def cmd_reg(config: PipelineConfig, run: Run, model: str = "italy_gt", source=None, panel=None):
    """Fit every country; failures are kept per country and reported."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    source = Source(source or config.reg_source)
    panel = panel or load_panel(config)
    results = {}
    for c in panel.countries:
        try:
            y = panel.get(c, Kind.LOG_RETURN)
            gt = _gt_for(panel, c, source, italy=model != "own_gt")
            if model == "controls":
                results[c] = fit_arx_controls(
                    y, gt, panel.get(c, Kind.IMPLIED_VOL), panel.get(c, Kind.GROWTH_RATE), config.se_kind,
                    config.tails,
                )
            else:
                results[c] = fit_arx(y, gt, config.se_kind, config.tails)
        except (ValueError, KeyError, ArithmeticError) as exc:
            log.warning("reg %s/%s failed for %s: %s", model, source.value, c.value, exc)
            results[c] = exc
    gt_label = "GT_t" if model == "own_gt" else "GT_IT,t"
    label = f"Model {model}; social data: {source.value}"
    stem = f"reg_{model}_{source.value}"
    run.write(f"{stem}.txt", format_results_table(results, label, gt_label))
    run.write(f"{stem}.csv", results_to_csv(results))
    failures = {c.value: str(e) for c, e in results.items() if isinstance(e, Exception)}
    return results, failures


def plot_data_tsv(fit, returns, events) -> str:
    dates = fit.dates
    ret = dict(zip(returns.dates.tolist(), returns.values.tolist()))
    flagged = set()
    for d, _label in events:
        later = dates[dates >= d]
        if later.size:
            flagged.add(later[0])
    sd = fit.smoothed_sd
    lines = ["date\treturn\tbeta_mean\tbeta_lo\tbeta_hi\tevent_flag"]
    for i, d in enumerate(dates):
        m = float(fit.smoothed_mean[i])
        lines.append("\t".join([
            str(d), repr(ret[d.item()]), repr(m), repr(m - 1.96 * float(sd[i])),
            repr(m + 1.96 * float(sd[i])), "1" if d in flagged else "0",
        ]))
    return "\n".join(lines) + "\n"


def cmd_tvp(config: PipelineConfig, run: Run, source=None, panel=None):
    source = Source(source or config.tvp_source)
    panel = panel or load_panel(config)
    events = event_overlay(panel.calendar)
    fits, failures = {}, {}
    options = TvpOptions(n_starts=config.tvp_starts, seed=config.seed,
                         prior=StatePrior(0.0, config.tvp_prior_var), fixed=dict(config.tvp_fixed))
    for c in panel.countries:
        try:
            y = panel.get(c, Kind.LOG_RETURN)
            gt = _gt_for(panel, c, source, italy=config.tvp_gt == "italy")
            fit = fit_tvp_mle(y, gt, options)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            log.warning("tvp failed for %s: %s", c.value, exc)
            failures[c.value] = str(exc)
            continue
        fits[c] = fit
        stem = f"tvp_{c.value}_{source.value}"
        run.write(f"{stem}.csv", fit.to_csv())
        side = fit.sidecar()
        side["events"] = [[str(d), label] for d, label in events]
        run.write(f"{stem}.json", json.dumps(side, indent=2, sort_keys=True) + "\n")
        run.write(f"{stem}_plot.tsv", plot_data_tsv(fit, y, events))
        if not fit.converged:
            failures[c.value] = "optimizer did not meet the convergence criterion"
    return fits, failures


def _stage(run: Run, name: str, fn, *args, **kwargs):
    try:
        value = fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest
        log.error("stage %s failed: %s", name, exc)
        run.stages[name] = f"failed: {exc}"
        return None
    failures = value[1] if isinstance(value, tuple) else {}
    run.stages[name] = "ok" if not failures else "failed: " + "; ".join(
        f"{k}: {v}" for k, v in failures.items()
    )
    return value


def cmd_report(config: PipelineConfig) -> Run:
    """All stages in order; the manifest is written last."""
    run = Run(config)
    panel = _stage(run, "ingest", cmd_ingest, config, run)
    if panel is not None:
        _stage(run, "ccf", cmd_ccf, config, run, panel)
        for model in ("own_gt", "italy_gt"):
            _stage(run, f"reg:{model}:{config.reg_source.value}", cmd_reg, config, run, model,
                   config.reg_source, panel)
        if panel.has(panel.countries[0], Kind.IMPLIED_VOL) and panel.has(panel.countries[0], Kind.GROWTH_RATE):
            for s in panel.sources:
                _stage(run, f"reg:controls:{s.value}", cmd_reg, config, run, "controls", s, panel)
        _stage(run, "tvp", cmd_tvp, config, run, None, panel)
    run.write_manifest()
    return run
