"""OLS with robust sandwich covariances, AR(1)-X fits and journal-style tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np
from scipy import linalg, stats

from .timeseries import COUNTRY_ORDER, InsufficientDataError, TimeSeries, inner_join

RANK_TOL = 1e-10
MIN_OBS = 10


class SingularDesignError(np.linalg.LinAlgError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient at column {column!r}")


@dataclass(frozen=True)
class SEKind:
    """``HC1`` or Newey-West with ``lags`` (``None`` selects the default bandwidth)."""

    name: str = "HC1"
    lags: int | None = None

    @classmethod
    def parse(cls, text: str, lags=None) -> "SEKind":
        t = text.strip().lower()
        if t == "hc1":
            return cls("HC1")
        if t in ("nw", "neweywest", "newey-west"):
            return cls("NeweyWest", lags)
        raise ValueError(f"unknown standard-error kind {text!r}")

    def __str__(self):
        return self.name if self.name == "HC1" else f"NeweyWest({self.lags})"


HC1 = SEKind("HC1")


def newey_west_default_lags(n: int) -> int:
    return int(math.floor(4 * (n / 100) ** (2 / 9)))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    names: tuple
    X: np.ndarray
    y: np.ndarray
    dates: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.size or X.shape[1] != len(self.names):
            raise ValueError("design shape does not match response / column names")
        if np.any(np.isnan(X)) or np.any(np.isnan(y)):
            raise ValueError("design contains missing values; drop rows first")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_columns(cls, y, columns: dict, dates=None) -> "DesignMatrix":
        """Build a design, dropping rows with any missing entry (listwise)."""
        names = tuple(columns)
        X = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
        y = np.asarray(y, dtype=float)
        keep = ~(np.isnan(y) | np.isnan(X).any(axis=1))
        d = None if dates is None else np.asarray(dates)[keep]
        return cls(names, X[keep], y[keep], d)


def check_rank(design: DesignMatrix) -> None:
    """Raise :class:`SingularDesignError` naming the first dependent column.

    Columns are scaled to unit norm and added one at a time; a column is
    offending when the smallest singular value of the columns so far drops
    below ``RANK_TOL`` times the largest.
    """
    X = design.X
    norms = np.linalg.norm(X, axis=0)
    for j, name in enumerate(design.names):
        if norms[j] == 0:
            raise SingularDesignError(name)
        s = np.linalg.svd(X[:, : j + 1] / norms[: j + 1], compute_uv=False)
        if s[-1] < RANK_TOL * s[0]:
            raise SingularDesignError(name)


@dataclass(frozen=True, eq=False)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    R: np.ndarray  # triangular factor of X = QR


def ols_fit(design: DesignMatrix) -> OlsFit:
    """Least squares through a QR factorization of the design."""
    if design.n <= design.k:
        raise InsufficientDataError(f"need more rows than columns ({design.n} <= {design.k})")
    check_rank(design)
    Q, R = np.linalg.qr(design.X, mode="reduced")
    b = linalg.solve_triangular(R, Q.T @ design.y)
    fitted = design.X @ b
    return OlsFit(b, design.y - fitted, fitted, R)


def _bread(R: np.ndarray) -> np.ndarray:
    """``(X'X)^{-1}`` from the R factor."""
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    return Rinv @ Rinv.T


def robust_covariance(X, residuals, kind: SEKind = HC1, R=None) -> np.ndarray:
    """Sandwich covariance ``B M B`` with ``B = (X'X)^{-1}``.

    HC1 uses ``M = n/(n-k) sum e_t^2 x_t x_t'``. Newey-West adds Bartlett
    weighted autocovariance terms up to ``lags`` without the small-sample
    factor, so ``NeweyWest(0)`` is HC0.
    """
    X = np.asarray(X, dtype=float)
    e = np.asarray(residuals, dtype=float)
    n, k = X.shape
    if R is None:
        R = np.linalg.qr(X, mode="r")
    bread = _bread(R)
    Xe = X * e[:, None]
    if kind.name == "HC1":
        meat = Xe.T @ Xe * (n / (n - k))
    elif kind.name == "NeweyWest":
        m = newey_west_default_lags(n) if kind.lags is None else kind.lags
        if m < 0 or m >= n:
            raise ValueError(f"Newey-West lags must be in [0, n), got {m} with n={n}")
        meat = Xe.T @ Xe
        for j in range(1, m + 1):
            w = 1.0 - j / (m + 1.0)
            g = Xe[j:].T @ Xe[:-j]
            meat += w * (g + g.T)
    else:
        raise ValueError(f"unknown covariance kind {kind}")
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2


def adjusted_r2(y, residuals, k: int) -> float:
    y = np.asarray(y, dtype=float)
    e = np.asarray(residuals, dtype=float)
    n = y.size
    if n <= k + 1:
        raise InsufficientDataError(f"adjusted R2 needs n > k + 1 (n={n}, k={k})")
    tss = np.sum((y - y.mean()) ** 2)
    if tss == 0:
        raise ValueError("adjusted R2 is undefined for a constant response")
    return float(1.0 - (e @ e / (n - k)) / (tss / (n - 1)))


def p_value(t_stat: float, dof: int, tails: int = 2) -> float:
    """Student-t p-value of ``|t_stat|``; ``tails=1`` gives the one-sided tail."""
    if tails not in (1, 2):
        raise ValueError(f"tails must be 1 or 2, got {tails}")
    return float(tails * stats.t.sf(abs(t_stat), dof))


def stars(t_stat: float, dof: int, tails: int = 2) -> str:
    p = p_value(t_stat, dof, tails)
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


@dataclass(frozen=True, eq=False)
class RegressionResult:
    names: tuple
    coefficients: dict
    robust_se: dict
    t_stats: dict
    p_values: dict
    stars: dict
    adj_r2: float
    residuals: np.ndarray
    n_obs: int
    se_kind: SEKind
    dates: np.ndarray | None = None
    tails: int = 2

    @property
    def dof(self) -> int:
        return self.n_obs - len(self.names)

    def to_rows(self) -> list:
        return [
            (name, self.coefficients[name], self.robust_se[name], self.t_stats[name],
             self.p_values[name], self.stars[name])
            for name in self.names
        ]


def fit(design: DesignMatrix, se_kind: SEKind = HC1, tails: int = 2) -> RegressionResult:
    res = ols_fit(design)
    cov = robust_covariance(design.X, res.residuals, se_kind, R=res.R)
    if se_kind.name == "NeweyWest" and se_kind.lags is None:
        se_kind = SEKind("NeweyWest", newey_west_default_lags(design.n))
    se = np.sqrt(np.diag(cov))
    t = res.coefficients / se
    dof = design.n - design.k
    names = design.names
    return RegressionResult(
        names=names,
        coefficients=dict(zip(names, res.coefficients.tolist())),
        robust_se=dict(zip(names, se.tolist())),
        t_stats=dict(zip(names, t.tolist())),
        p_values={nm: p_value(tv, dof, tails) for nm, tv in zip(names, t)},
        stars={nm: stars(tv, dof, tails) for nm, tv in zip(names, t)},
        adj_r2=adjusted_r2(design.y, res.residuals, design.k),
        residuals=res.residuals,
        n_obs=design.n,
        se_kind=se_kind,
        dates=design.dates,
        tails=tails,
    )


def _aligned(*series):
    if all(isinstance(s, TimeSeries) for s in series):
        joined = inner_join(*series)
        return joined[0].dates, [s.values for s in joined]
    arrays = [np.asarray(s.values if isinstance(s, TimeSeries) else s, dtype=float) for s in series]
    if len({a.size for a in arrays}) != 1:
        raise ValueError("series must have equal length")
    return None, arrays


def arx_design(y, gt, iv=None, dcc=None) -> DesignMatrix:
    """Columns ``const, GT, y_lag`` (plus ``IV, dCC`` when given).

    Row ``t`` pairs ``y[t]`` with ``y[t-1]``, so the first observation is
    consumed by the lag. Rows with missing entries are dropped.
    """
    extra = [s for s in (iv, dcc) if s is not None]
    dates, arrays = _aligned(y, gt, *extra)
    yv, gv = arrays[0], arrays[1]
    cols = {"const": np.ones(yv.size - 1), "GT": gv[1:], "y_lag": yv[:-1]}
    if iv is not None:
        cols["IV"] = arrays[2][1:]
        cols["dCC"] = arrays[3][1:]
    return DesignMatrix.from_columns(yv[1:], cols, None if dates is None else dates[1:])


def fit_arx(y, gt, se_kind: SEKind = HC1, tails: int = 2) -> RegressionResult:
    """``y_t = a + b GT_t + d y_{t-1} + e_t`` with robust standard errors."""
    design = arx_design(y, gt)
    if design.n < MIN_OBS:
        raise InsufficientDataError(f"AR(1)-X fit needs at least {MIN_OBS} rows, got {design.n}")
    return fit(design, se_kind, tails)


def fit_arx_controls(y, gt, iv, dcc, se_kind: SEKind = HC1, tails: int = 2) -> RegressionResult:
    """AR(1)-X with implied volatility and case-growth controls."""
    design = arx_design(y, gt, iv, dcc)
    if design.n < MIN_OBS:
        raise InsufficientDataError(
            f"controls fit needs at least {MIN_OBS} complete rows, got {design.n}"
        )
    return fit(design, se_kind, tails)


# ---------------------------------------------------------------------------
# Output

ROW_LABELS = {
    "const": "const",
    "GT": "GT_t",
    "y_lag": "y_{t-1}",
    "IV": "IV_t",
    "dCC": "dCC%_t",
}


def fmt3(x: float) -> str:
    """Three-decimal fixed format, rounding the shortest decimal repr half-even.

    Exact zero prints as ``0.000``; small negatives keep their sign
    (``-0.0004 -> -0.000``).
    """
    if x == 0:
        return "0.000"
    q = Decimal(repr(float(x))).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN)
    text = format(q, "f")
    if x < 0 and not text.startswith("-"):
        text = "-" + text
    return text


def format_results_table(results: dict, model_label: str = "", gt_label: str = "GT_t") -> str:
    """Journal-style table: coefficient with stars over ``(se)``, adj. R2 last.

    ``results`` maps country to :class:`RegressionResult` (or to an
    exception for a failed fit, shown as ``n/a``).
    """
    countries = [c for c in COUNTRY_ORDER if c in results or c.value in results]
    res = {c: results[c] if c in results else results[c.value] for c in countries}
    ok = [r for r in res.values() if isinstance(r, RegressionResult)]
    if not res:
        raise ValueError("no results to format")
    names = ok[0].names if ok else ()
    labels = dict(ROW_LABELS, GT=gt_label)
    rows = [["", *[c.value for c in countries]]]
    for name in names:
        coef_row, se_row = [labels.get(name, name)], [""]
        for c in countries:
            r = res[c]
            if isinstance(r, RegressionResult):
                coef_row.append(fmt3(r.coefficients[name]) + r.stars[name])
                se_row.append(f"({fmt3(r.robust_se[name])})")
            else:
                coef_row.append("n/a")
                se_row.append("")
        rows += [coef_row, se_row]
    r2_row = ["adj. R2"] + [
        fmt3(res[c].adj_r2) if isinstance(res[c], RegressionResult) else "n/a" for c in countries
    ]
    widths = [max(len(r[i]) for r in rows + [r2_row]) for i in range(len(rows[0]))]

    def line(r):
        return r[0].ljust(widths[0]) + " | " + "  ".join(x.rjust(w) for x, w in zip(r[1:], widths[1:]))

    out = []
    if model_label:
        out.append(model_label)
    out.append(line(rows[0]))
    rule = "-" * len(out[-1])
    out.append(rule)
    out += [line(r) for r in rows[1:]]
    out.append(rule)
    out.append(line(r2_row))
    kinds = {str(r.se_kind) for r in ok}
    sided = " (one-sided)" if any(r.tails == 1 for r in ok) else ""
    out.append(
        f"Robust standard errors ({', '.join(sorted(kinds))}) in parentheses; "
        f"*, **, *** denote significance at 10%, 5%, 1%{sided}."
    )
    for c in countries:
        if not isinstance(res[c], RegressionResult):
            out.append(f"! {c.value}: {res[c]}")
    return "\n".join(out) + "\n"


def results_to_csv(results: dict) -> str:
    """One row per (country, coefficient) at full precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["country", "term", "estimate", "se", "t", "p", "stars", "adj_r2", "n_obs", "se_kind"])
    for c in COUNTRY_ORDER:
        r = results.get(c, results.get(c.value))
        if not isinstance(r, RegressionResult):
            continue
        for name, b, se, t, p, s in r.to_rows():
            w.writerow([c.value, name, repr(b), repr(se), repr(t), repr(p), s, repr(r.adj_r2), r.n_obs, str(r.se_kind)])
    return buf.getvalue()
