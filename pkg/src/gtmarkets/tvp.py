"""Time-varying-coefficient regression as a scalar linear Gaussian state space.

Model, for t = 1..n-1 after building the lag::

    y_t    = alpha + beta_t * GT_t + delta * y_{t-1} + eps_t,   eps_t ~ N(0, sigma2)
    beta_t = A * beta_{t-1} + eta_t,                            eta_t ~ N(0, B)

with ``beta_0 ~ N(mean0, var0)``. The filter works on the partial residual
``z_t = y_t - alpha - delta * y_{t-1}`` whose loading on the state is GT_t.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy import optimize

from .regress import DesignMatrix, fit as fit_design, fit_arx
from .timeseries import InsufficientDataError, TimeSeries, as_dates, inner_join

log = logging.getLogger(__name__)

F_FLOOR = 1e-12
PARAM_NAMES = ("alpha", "delta", "sigma2", "A", "B")

EVENTS = (
    ("2020-01-23", "first COVID-19 case in Germany"),
    ("2020-02-24", "lock-down of northern Italian provinces"),
    ("2020-03-09", "lock-down for all Italian citizens"),
    ("2020-03-12", "lock-down of most Italian economic activities"),
)


class FilterInstabilityError(FloatingPointError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"innovation variance fell below {F_FLOOR:g} at t={t}")


class OptimizationFailure(RuntimeError):
    def __init__(self, message, trace):
        self.trace = trace
        super().__init__(message)


@dataclass(frozen=True)
class TvpParams:
    alpha: float
    delta: float
    sigma2: float
    A: float
    B: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.B >= 0:
            raise ValueError(f"B must be non-negative, got {self.B}")
        if not all(math.isfinite(v) for v in (self.alpha, self.delta, self.sigma2, self.A, self.B)):
            raise ValueError("parameters must be finite")


@dataclass(frozen=True)
class StatePrior:
    mean0: float = 0.0
    var0: float = 1e6

    def __post_init__(self):
        if not self.var0 > 0:
            raise ValueError("prior variance must be positive")


DIFFUSE = StatePrior()


@numba.njit(cache=True)
def _filter_kernel(z, H, A, B, sigma2, m0, P0, floor):
    n = z.shape[0]
    a = np.empty(n)
    P = np.empty(n)
    m = np.empty(n)
    Pf = np.empty(n)
    v = np.empty(n)
    F = np.empty(n)
    ll = np.empty(n)
    mp, Pp = m0, P0
    for t in range(n):
        at = A * mp
        Pt = A * A * Pp + B
        Ft = H[t] * H[t] * Pt + sigma2
        if not Ft > floor:
            return a, P, m, Pf, v, F, ll, t
        vt = z[t] - H[t] * at
        K = Pt * H[t] / Ft
        mp = at + K * vt
        Pp = Pt * sigma2 / Ft
        a[t], P[t], m[t], Pf[t], v[t], F[t] = at, Pt, mp, Pp, vt, Ft
        ll[t] = -0.5 * (np.log(2.0 * np.pi) + np.log(Ft) + vt * vt / Ft)
    return a, P, m, Pf, v, F, ll, -1


@numba.njit(cache=True)
def _loglik_kernel(z, H, A, B, sigma2, m0, P0, floor):
    mp, Pp = m0, P0
    total = 0.0
    for t in range(z.shape[0]):
        at = A * mp
        Pt = A * A * Pp + B
        Ft = H[t] * H[t] * Pt + sigma2
        if not Ft > floor:
            return np.nan
        vt = z[t] - H[t] * at
        mp = at + Pt * H[t] / Ft * vt
        Pp = Pt * sigma2 / Ft
        total += np.log(Ft) + vt * vt / Ft
    return -0.5 * (z.shape[0] * np.log(2.0 * np.pi) + total)


@dataclass(frozen=True, eq=False)
class FilterOutput:
    predicted_mean: np.ndarray
    predicted_var: np.ndarray
    filtered_mean: np.ndarray
    filtered_var: np.ndarray
    innovations: np.ndarray
    innovation_var: np.ndarray
    loglik_terms: np.ndarray
    prior: StatePrior
    A: float

    @property
    def loglik(self) -> float:
        return float(self.loglik_terms.sum())


def filter_state(z, H, A, B, sigma2, prior: StatePrior = DIFFUSE) -> FilterOutput:
    """Kalman filter for ``z_t = H_t beta_t + eps_t`` with AR(1) state."""
    z = np.ascontiguousarray(z, dtype=float)
    H = np.ascontiguousarray(H, dtype=float)
    if z.shape != H.shape:
        raise ValueError("z and H must have equal length")
    a, P, m, Pf, v, F, ll, bad = _filter_kernel(
        z, H, float(A), float(B), float(sigma2), float(prior.mean0), float(prior.var0), F_FLOOR
    )
    if bad >= 0:
        raise FilterInstabilityError(int(bad))
    return FilterOutput(a, P, m, Pf, v, F, ll, prior, float(A))


def partial_residual(y, gt, alpha, delta):
    """``(z, H)`` for t >= 1: ``z_t = y_t - alpha - delta*y_{t-1}``, ``H_t = GT_t``."""
    y = np.asarray(y, dtype=float)
    gt = np.asarray(gt, dtype=float)
    return y[1:] - alpha - delta * y[:-1], gt[1:]


def kalman_filter(y, gt, params: TvpParams, prior: StatePrior = DIFFUSE) -> FilterOutput:
    z, H = partial_residual(y, gt, params.alpha, params.delta)
    return filter_state(z, H, params.A, params.B, params.sigma2, prior)


def rts_smoother(out: FilterOutput):
    """Rauch-Tung-Striebel backward pass; returns ``(smoothed_mean, smoothed_var)``."""
    n = out.filtered_mean.size
    ms = np.array(out.filtered_mean, copy=True)
    Ps = np.array(out.filtered_var, copy=True)
    A = out.A
    for t in range(n - 2, -1, -1):
        Pp = out.predicted_var[t + 1]
        J = out.filtered_var[t] * A / Pp if Pp > 0 else 0.0
        ms[t] = out.filtered_mean[t] + J * (ms[t + 1] - out.predicted_mean[t + 1])
        Ps[t] = out.filtered_var[t] + J * J * (Ps[t + 1] - Pp)
    return ms, Ps


def log_likelihood(params: TvpParams, y, gt, prior: StatePrior = DIFFUSE) -> float:
    if not isinstance(params, TvpParams):
        params = TvpParams(*params)
    z, H = partial_residual(y, gt, params.alpha, params.delta)
    ll = _loglik_kernel(
        np.ascontiguousarray(z), np.ascontiguousarray(H), float(params.A), float(params.B),
        float(params.sigma2), float(prior.mean0), float(prior.var0), F_FLOOR,
    )
    if math.isnan(ll):
        # rerun the full filter to locate the unstable step
        kalman_filter(y, gt, params, prior)
    return float(ll)


# ---------------------------------------------------------------------------
# Estimation


@dataclass
class TvpOptions:
    n_starts: int = 8
    seed: int = 0
    prior: StatePrior = DIFFUSE
    fixed: dict = field(default_factory=dict)
    maxiter: int = 40000
    xatol: float = 1e-9
    fatol: float = 1e-11
    rolling_window: int = 20


@dataclass(frozen=True, eq=False)
class TvpFit:
    params: TvpParams
    dates: np.ndarray | None
    smoothed_mean: np.ndarray
    smoothed_var: np.ndarray
    filtered_mean: np.ndarray
    filtered_var: np.ndarray
    loglik: float
    converged: bool
    optimizer_trace: list
    identified: bool = True
    warnings: tuple = ()

    @property
    def explosive(self) -> bool:
        return abs(self.params.A) > 1

    @property
    def smoothed_sd(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.smoothed_var, 0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "smoothed_mean", "smoothed_sd", "filtered_mean"])
        dates = self.dates if self.dates is not None else range(self.smoothed_mean.size)
        for d, m, s, f in zip(dates, self.smoothed_mean, self.smoothed_sd, self.filtered_mean):
            w.writerow([str(d), repr(float(m)), repr(float(s)), repr(float(f))])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "params": asdict(self.params),
            "loglik": self.loglik,
            "converged": self.converged,
            "identified": self.identified,
            "explosive_A": self.explosive,
            "warnings": list(self.warnings),
            "starts": [
                {k: v for k, v in s.items() if k != "fun_trace"} for s in self.optimizer_trace
            ],
        }

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n"


def _initial_guess(yv, gv, window):
    """OLS-based starting values and per-coordinate step scales."""
    try:
        arx = fit_arx(yv, gv)
        alpha, delta = arx.coefficients["const"], arx.coefficients["y_lag"]
        alpha_se = arx.robust_se["const"]
        sigma2 = float(arx.residuals @ arx.residuals / arx.dof)
    except (np.linalg.LinAlgError, ValueError):
        ar = fit_design(
            DesignMatrix(("const", "y_lag"), np.column_stack([np.ones(yv.size - 1), yv[:-1]]), yv[1:])
        )
        alpha, delta = ar.coefficients["const"], ar.coefficients["y_lag"]
        alpha_se = ar.robust_se["const"]
        sigma2 = float(ar.residuals @ ar.residuals / ar.dof)
    slopes = []
    for s in range(0, yv.size - window):
        seg_y, seg_g = yv[s : s + window + 1], gv[s : s + window + 1]
        try:
            slopes.append(fit_arx(seg_y, seg_g).coefficients["GT"])
        except (np.linalg.LinAlgError, ValueError):
            continue
    B = 0.01 * float(np.var(slopes)) if len(slopes) > 1 else 0.0
    if not B > 0:
        B = 1e-6 * sigma2
    base = {"alpha": alpha, "delta": delta, "sigma2": max(sigma2, 1e-300), "A": 0.98, "B": B}
    scales = {"alpha": max(2 * alpha_se, 1e-4), "delta": 0.1, "sigma2": 0.5, "A": 0.05, "B": 1.0}
    return base, scales


def _to_theta(values: dict, free):
    return np.array([math.log(values[p]) if p in ("sigma2", "B") else values[p] for p in free])


def _from_theta(theta, free, fixed) -> dict:
    out = dict(fixed)
    for p, x in zip(free, theta):
        out[p] = math.exp(x) if p in ("sigma2", "B") else float(x)
    return out


def fit_tvp_mle(y, gt, options: TvpOptions | None = None) -> TvpFit:
    """Maximum-likelihood fit with Nelder-Mead multi-start, then smoothing.

    Free parameters are optimized as ``(alpha, delta, log sigma2, A, log B)``;
    any of ``PARAM_NAMES`` can be pinned through ``options.fixed``. The
    result is ``converged`` when the best start's final simplex diameter is
    below 1e-8 and the objective moved less than 1e-10 over its last ten
    iterations.
    """
    options = options or TvpOptions()
    dates = None
    if isinstance(y, TimeSeries) and isinstance(gt, TimeSeries):
        y, gt = inner_join(y, gt)
        dates = y.dates[1:]
    yv = np.asarray(y.values if isinstance(y, TimeSeries) else y, dtype=float)
    gv = np.asarray(gt.values if isinstance(gt, TimeSeries) else gt, dtype=float)
    if yv.size != gv.size:
        raise ValueError("y and gt must have equal length")
    if np.any(np.isnan(yv)) or np.any(np.isnan(gv)):
        raise ValueError("TVP fit does not accept missing values")
    if yv.size - 1 < 20:
        raise InsufficientDataError(f"TVP fit needs an effective sample of 20, got {yv.size - 1}")
    unknown = set(options.fixed) - set(PARAM_NAMES)
    if unknown:
        raise ValueError(f"unknown fixed parameters {sorted(unknown)}")

    notes = []
    identified = bool(np.any(gv[1:] != 0))
    if not identified:
        notes.append("GT loading is identically zero: A and B are not identified")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    base, scales = _initial_guess(yv, gv, options.rolling_window)
    base.update(options.fixed)
    free = [p for p in PARAM_NAMES if p not in options.fixed]
    fixed = {p: float(v) for p, v in options.fixed.items()}
    prior = options.prior
    z_y, H = yv, np.ascontiguousarray(gv[1:])
    y_cur, y_lag = np.ascontiguousarray(z_y[1:]), np.ascontiguousarray(z_y[:-1])

    def objective(theta):
        p = _from_theta(theta, free, fixed)
        if not (p["sigma2"] > 0 and p["B"] >= 0) or not all(map(math.isfinite, p.values())):
            return np.inf
        z = y_cur - p["alpha"] - p["delta"] * y_lag
        ll = _loglik_kernel(z, H, p["A"], p["B"], p["sigma2"], prior.mean0, prior.var0, F_FLOOR)
        return -ll if math.isfinite(ll) else np.inf

    rng = np.random.default_rng(options.seed)
    theta0 = _to_theta(base, free)
    step = np.array([scales[p] for p in free])
    trace = []
    best = None
    for s in range(max(1, options.n_starts)):
        start = theta0 if s == 0 else theta0 + rng.normal(size=theta0.size) * step
        if not free:
            fun = objective(start)
            trace.append({"start": s, "x0": [], "x": [], "fun": fun, "nit": 0,
                          "diameter": 0.0, "status": "nothing to optimize", "fun_trace": [fun]})
            best = (fun, start, trace[-1])
            break
        simplex = np.vstack([start, start + np.diag(step)])
        history = []

        def record(intermediate_result):
            history.append(float(intermediate_result.fun))

        res = optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            callback=record,
            options={
                "initial_simplex": simplex,
                "xatol": options.xatol,
                "fatol": options.fatol,
                "maxiter": options.maxiter,
                "maxfev": 4 * options.maxiter,
            },
        )
        verts = res.final_simplex[0]
        diam = float(max(np.linalg.norm(a - b) for a in verts for b in verts))
        entry = {
            "start": s,
            "x0": [float(v) for v in start],
            "x": [float(v) for v in res.x],
            "fun": float(res.fun),
            "nit": int(res.nit),
            "diameter": diam,
            "status": str(res.message),
            "fun_trace": history,
        }
        trace.append(entry)
        log.debug("start %d: fun=%.6f nit=%d diam=%.2e", s, res.fun, res.nit, diam)
        if math.isfinite(res.fun) and (best is None or res.fun < best[0]):
            best = (float(res.fun), res.x, entry)
    if best is None or not math.isfinite(best[0]):
        raise OptimizationFailure("all starts diverged", trace)

    fun, theta, entry = best
    hist = entry["fun_trace"]
    flat = len(hist) > 10 and abs(hist[-11] - hist[-1]) < 1e-10
    converged = bool(not free or (entry["diameter"] < 1e-8 and flat))
    converged = converged and identified
    params = TvpParams(**_from_theta(theta, free, fixed))
    if abs(params.A) > 1:
        notes.append(f"|A| = {abs(params.A):.4f} > 1: explosive coefficient dynamics")
    out = kalman_filter(yv, gv, params, prior)
    sm, sv = rts_smoother(out)
    return TvpFit(
        params=params,
        dates=dates,
        smoothed_mean=sm,
        smoothed_var=sv,
        filtered_mean=out.filtered_mean,
        filtered_var=out.filtered_var,
        loglik=out.loglik,
        converged=converged,
        optimizer_trace=trace,
        identified=identified,
        warnings=tuple(notes),
    )


def simulate(params: TvpParams, gt, y0=0.0, rng=None, beta0=0.0):
    """Draw ``(y, beta)`` from the model; ``y[0] = y0`` and ``beta`` is for t >= 1."""
    rng = np.random.default_rng(rng)
    gt = np.asarray(gt, dtype=float)
    n = gt.size
    y = np.empty(n)
    beta = np.empty(n - 1)
    y[0] = y0
    b = beta0
    for t in range(1, n):
        b = params.A * b + math.sqrt(params.B) * rng.standard_normal()
        beta[t - 1] = b
        y[t] = (params.alpha + b * gt[t] + params.delta * y[t - 1]
                + math.sqrt(params.sigma2) * rng.standard_normal())
    return y, beta


def event_overlay(calendar) -> list:
    """Figure annotation events falling within the calendar's date span."""
    cal = as_dates(calendar).ravel()
    if cal.size == 0:
        return []
    lo, hi = cal.min(), cal.max()
    return [(np.datetime64(d, "D"), label) for d, label in EVENTS if lo <= np.datetime64(d, "D") <= hi]
