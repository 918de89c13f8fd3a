"""Google-Trends topic queries, the on-disk payload format, and a caching fetcher.

The Trends endpoint is unofficial, so the fetcher talks to a configurable
base URL (``GTRENDS_BASE_URL``) and otherwise works from cached or fixture
payloads of the form::

    {"timeline": [{"date": "2020-01-01", "value": 12}, ...]}

Responses are sample-dependent; every cached payload keeps the timestamp of
its retrieval and payloads from different retrievals are never merged.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import tempfile
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .timeseries import Country, Kind, TimeSeries

log = logging.getLogger(__name__)

COVID_TOPIC = "/m/01cpyy"
BASE_URL_ENV = "GTRENDS_BASE_URL"
DEFAULT_BASE_URL = "https://trends.google.com/trends/api/widgetdata/multiline"


class Gprop(str, Enum):
    ALL = "all"
    YOUTUBE = "youtube"
    NEWS = "news"

    def __str__(self):
        return self.value


class ParseError(ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")


class ValidationError(ValueError):
    pass


class CacheMissError(LookupError):
    pass


class TransportError(OSError):
    def __init__(self, message, retries):
        self.retries = retries
        super().__init__(f"{message} after {retries} retries")


def _to_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").item()
    return dt.date.fromisoformat(str(value))


@dataclass(frozen=True)
class QueryDescriptor:
    topic_id: str
    date_from: dt.date
    date_to: dt.date
    geo: str = ""
    gprop: Gprop = Gprop.ALL

    def serialize(self) -> str:
        """Canonical query string; parameters in the order q, date, geo, gprop.

        Worldwide queries omit ``geo`` and all-search queries omit ``gprop``.
        """
        params = [("q", self.topic_id), ("date", f"{self.date_from} {self.date_to}")]
        if self.geo:
            params.append(("geo", self.geo))
        if self.gprop is not Gprop.ALL:
            params.append(("gprop", self.gprop.value))
        return urllib.parse.urlencode(params, safe="/", quote_via=urllib.parse.quote)

    @property
    def cache_key(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    @property
    def days(self) -> np.ndarray:
        return np.arange(
            np.datetime64(self.date_from, "D"), np.datetime64(self.date_to, "D") + 1
        )


def build_query(topic_id, date_from, date_to, geo="", gprop=Gprop.ALL) -> QueryDescriptor:
    if not topic_id:
        raise ValueError("topic_id must be non-empty")
    d0, d1 = _to_date(date_from), _to_date(date_to)
    if d0 > d1:
        raise ValueError(f"date_from {d0} is after date_to {d1}")
    geo = Country.parse(geo).value if geo else ""
    return QueryDescriptor(topic_id, d0, d1, geo, Gprop(gprop))


@dataclass(frozen=True, eq=False)
class FetchResult:
    query: QueryDescriptor
    series: TimeSeries
    retrieved_at: str
    from_cache: bool


def serialize_payload(series: TimeSeries) -> str:
    timeline = [
        {"date": str(d), "value": int(v)} for d, v in zip(series.dates, series.values)
    ]
    return json.dumps({"timeline": timeline}, separators=(",", ":"))


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def parse_response(payload, query: QueryDescriptor, retrieved_at="", from_cache=False) -> FetchResult:
    """Turn a timeline payload into a daily ``gt_scaled`` series for ``query``.

    The payload must hold exactly one integer in [0, 100] for every day of
    the query range.
    """
    if isinstance(payload, bytes):
        payload = payload.decode("utf-8")
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed payload: {exc.msg}", _byte_offset(payload, exc.pos)) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("timeline"), list):
        raise ParseError("payload has no 'timeline' list", 0)
    by_date = {}
    for i, point in enumerate(doc["timeline"]):
        try:
            day = np.datetime64(dt.date.fromisoformat(point["date"]), "D")
            value = point["value"]
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"timeline entry {i} is not a {{date, value}} pair") from None
        if day in by_date:
            raise ParseError(f"duplicate timeline date {day}")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ValidationError(f"value {value!r} on {day} is not an integer")
        if not 0 <= value <= 100:
            raise ValidationError(f"value {value} on {day} is outside [0, 100]")
        by_date[day] = int(value)
    days = query.days
    for day in days:
        if day not in by_date:
            raise ParseError(f"timeline is missing {day}")
    extra = sorted(set(by_date) - set(days))
    if extra:
        raise ParseError(f"timeline has date {extra[0]} outside the query range")
    series = TimeSeries(days, [by_date[d] for d in days], Kind.GT_SCALED)
    return FetchResult(query, series, retrieved_at, from_cache)


def atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class TrendsCache:
    """Directory of ``<cache_key>.json`` payloads with ``.meta.json`` sidecars."""

    def __init__(self, root, fixture_dirs=()):
        self.root = Path(root)
        self.fixture_dirs = [Path(p) for p in fixture_dirs]

    def payload_path(self, query: QueryDescriptor) -> Path:
        return self.root / f"{query.cache_key}.json"

    def lookup(self, query: QueryDescriptor):
        """Return ``(payload, retrieved_at)`` or ``None``."""
        for base in [self.root, *self.fixture_dirs]:
            path = base / f"{query.cache_key}.json"
            if path.exists():
                meta = base / f"{query.cache_key}.meta.json"
                retrieved_at = ""
                if meta.exists():
                    retrieved_at = json.loads(meta.read_text()).get("retrieved_at", "")
                return path.read_bytes(), retrieved_at
        return None

    def store(self, query: QueryDescriptor, payload: bytes, retrieved_at: str) -> None:
        meta = {"query": query.serialize(), "retrieved_at": retrieved_at}
        atomic_write(self.root / f"{query.cache_key}.meta.json", json.dumps(meta, indent=1).encode())
        atomic_write(self.payload_path(query), payload)


def _http_get(url: str, retries: int, backoff: float, timeout: float) -> bytes:
    last = None
    for attempt in range(retries + 1):
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError) as exc:
            last = exc
            log.warning("GET %s failed (attempt %d): %s", url, attempt + 1, exc)
            if attempt < retries:
                time.sleep(backoff * 2**attempt)
    raise TransportError(f"GET {url} failed: {last}", retries)


def fetch_with_cache(
    query: QueryDescriptor,
    cache_dir,
    mode="offline",
    *,
    base_url=None,
    fixture_dirs=(),
    retries=3,
    backoff=0.5,
    timeout=30.0,
) -> FetchResult:
    """Fetch a query, preferring the cache.

    ``mode="offline"`` reads only the cache and ``fixture_dirs``; a miss
    raises :class:`CacheMissError`. ``mode="online"`` falls back to an HTTP
    GET of ``<base_url>?<canonical query>`` and caches the raw body under
    the query's hash before parsing it.
    """
    if mode not in ("online", "offline"):
        raise ValueError(f"unknown mode {mode!r}")
    cache = TrendsCache(cache_dir, fixture_dirs)
    hit = cache.lookup(query)
    if hit is not None:
        payload, retrieved_at = hit
        return parse_response(payload, query, retrieved_at, from_cache=True)
    if mode == "offline":
        raise CacheMissError(f"no cached payload for {query.serialize()} ({query.cache_key})")
    base = base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL
    payload = _http_get(f"{base}?{query.serialize()}", retries, backoff, timeout)
    retrieved_at = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    result = parse_response(payload, query, retrieved_at, from_cache=False)
    cache.store(query, payload, retrieved_at)
    return result
