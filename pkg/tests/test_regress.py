import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtmarkets.regress import (
    HC1,
    DesignMatrix,
    RegressionResult,
    SEKind,
    SingularDesignError,
    adjusted_r2,
    fit,
    fit_arx,
    fit_arx_controls,
    fmt3,
    format_results_table,
    newey_west_default_lags,
    ols_fit,
    p_value,
    results_to_csv,
    robust_covariance,
    stars,
)
from gtmarkets.timeseries import Country, InsufficientDataError, Kind, TimeSeries

from oracles import sandwich_literal, t_two_sided_p


def simulate_arx(alpha, beta, delta, gt, noise=None, y0=0.0):
    y = np.empty(gt.size)
    y[0] = y0
    for t in range(1, gt.size):
        y[t] = alpha + beta * gt[t] + delta * y[t - 1] + (0.0 if noise is None else noise[t])
    return y


class TestOls:
    def test_exact_two_regressors(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, 2))
        y = 3 * X[:, 0] - 2 * X[:, 1]
        res = ols_fit(DesignMatrix(("x1", "x2"), X, y))
        np.testing.assert_allclose(res.coefficients, [3, -2], atol=1e-10)

    def test_intercept_only_is_mean(self):
        y = np.array([1.0, 4.0, 2.0, 7.0])
        res = ols_fit(DesignMatrix(("const",), np.ones(4), y))
        assert res.coefficients[0] == pytest.approx(y.mean(), abs=1e-14)

    def test_duplicate_column(self):
        x = np.random.default_rng(1).normal(size=10)
        with pytest.raises(SingularDesignError) as err:
            ols_fit(DesignMatrix(("const", "a", "b"), np.column_stack([np.ones(10), x, x]), x))
        assert err.value.column == "b"

    def test_needs_more_rows_than_columns(self):
        with pytest.raises(InsufficientDataError):
            ols_fit(DesignMatrix(("a", "b"), np.eye(2), np.ones(2)))

    @settings(max_examples=50)
    @given(st.integers(0, 100_000))
    def test_residual_orthogonality(self, seed):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(30), rng.normal(size=(30, 3))])
        res = ols_fit(DesignMatrix(("c", "a", "b", "d"), X, rng.normal(size=30)))
        assert np.max(np.abs(X.T @ res.residuals)) < 1e-8

    @settings(max_examples=30)
    @given(st.integers(0, 100_000))
    def test_noise_regressor_never_increases_rss(self, seed):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(25), rng.normal(size=25)])
        y = rng.normal(size=25)
        small = ols_fit(DesignMatrix(("c", "x"), X, y)).residuals
        big = ols_fit(DesignMatrix(("c", "x", "z"), np.column_stack([X, rng.normal(size=25)]), y)).residuals
        assert big @ big <= small @ small + 1e-12


class TestRobustCovariance:
    def _instance(self, seed, n=4, k=2):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
        y = rng.normal(size=n)
        return X, ols_fit(DesignMatrix(tuple(f"x{i}" for i in range(k)), X, y)).residuals

    def test_nw0_is_hc0(self):
        X, e = self._instance(3, n=12, k=3)
        n, k = X.shape
        nw0 = robust_covariance(X, e, SEKind("NeweyWest", 0))
        hc1 = robust_covariance(X, e, HC1)
        np.testing.assert_allclose(nw0, hc1 * (n - k) / n, rtol=1e-13, atol=0)

    def test_four_by_two_against_literal_sum(self):
        X, e = self._instance(5)
        for kind, lags in (("HC1", 0), ("NeweyWest", 1), ("NeweyWest", 3)):
            ours = robust_covariance(X, e, SEKind(kind, lags))
            ref = sandwich_literal(X, e, kind, lags)
            assert np.max(np.abs(ours - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_homoskedastic_closed_form(self):
        rng = np.random.default_rng(9)
        X = np.column_stack([np.ones(8), rng.normal(size=8)])
        c = 0.3
        e = np.full(8, c)
        expected = c**2 * (8 / 6) * np.linalg.inv(X.T @ X)
        np.testing.assert_allclose(robust_covariance(X, e, HC1), expected, rtol=1e-12)

    def test_lags_bounded_by_n(self):
        X, e = self._instance(1, n=6)
        with pytest.raises(ValueError):
            robust_covariance(X, e, SEKind("NeweyWest", 6))

    def test_default_bandwidth(self):
        assert newey_west_default_lags(73) == 3
        assert newey_west_default_lags(100) == 4

    @settings(max_examples=40)
    @given(st.integers(0, 100_000))
    def test_hc1_is_symmetric_psd(self, seed):
        X, e = self._instance(seed, n=15, k=3)
        V = robust_covariance(X, e, HC1)
        assert np.array_equal(V, V.T)
        assert np.linalg.eigvalsh(V).min() >= -1e-10


class TestAdjustedR2:
    def test_perfect_fit(self):
        assert adjusted_r2([1.0, 2.0, 4.0], [0.0, 0.0, 0.0], 1) == 1.0

    def test_worse_than_mean_is_negative(self):
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        assert adjusted_r2(y, y - y.mean(), 2) < 0

    def test_five_points(self):
        y = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        e = np.array([0.1, -0.2, 0.3, -0.1, -0.1])
        # RSS = 0.16, TSS = 10; 1 - (0.16/3)/(10/4)
        assert adjusted_r2(y, e, 2) == pytest.approx(1 - (0.16 / 3) / 2.5, abs=1e-12)

    def test_undefined(self):
        with pytest.raises(ValueError):
            adjusted_r2([2.0, 2.0, 2.0, 2.0], [0, 0, 0, 0], 1)
        with pytest.raises(InsufficientDataError):
            adjusted_r2([1.0, 2.0], [0, 0], 1)


class TestStars:
    def test_zero(self):
        assert stars(0.0, 5) == ""

    @pytest.mark.parametrize("t, dof, expected", [(2.0, 60, "*"), (-2.0, 60, "*"), (2.8, 70, "***")])
    def test_against_t_quadrature(self, t, dof, expected):
        p = t_two_sided_p(t, dof)
        assert stars(t, dof) == expected
        assert p == pytest.approx({60: 0.0500330436514574, 70: 0.006599741266320239}[dof], rel=1e-9)

    @given(st.floats(0, 10), st.floats(0, 10), st.integers(1, 200))
    def test_monotone(self, a, b, dof):
        lo, hi = sorted((a, b))
        assert len(stars(hi, dof)) >= len(stars(lo, dof))


class TestArx:
    def test_zero_noise_recovery(self):
        gt = np.random.default_rng(2).uniform(size=74)
        y = simulate_arx(0.01, -0.05, -0.3, gt, y0=0.02)
        res = fit_arx(y, gt)
        assert res.names == ("const", "GT", "y_lag")
        for name, truth in zip(res.names, (0.01, -0.05, -0.3)):
            assert res.coefficients[name] == pytest.approx(truth, abs=1e-10)
        assert res.n_obs == 73

    def test_constant_gt_is_singular(self):
        y = np.random.default_rng(0).normal(size=30)
        with pytest.raises(SingularDesignError) as err:
            fit_arx(y, np.full(30, 0.4))
        assert err.value.column == "GT"

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            fit_arx(np.arange(8.0), np.arange(8.0) ** 2)

    def test_aligns_timeseries_inputs(self):
        days = np.arange(np.datetime64("2020-01-01"), np.datetime64("2020-02-10"))
        rng = np.random.default_rng(4)
        gt = TimeSeries(days, rng.uniform(size=days.size), Kind.GT_UNIT)
        y = TimeSeries(days[1:], rng.normal(size=days.size - 1), Kind.LOG_RETURN)
        res = fit_arx(y, gt)
        assert res.n_obs == days.size - 2
        assert res.dates[0] == days[2]

    @settings(max_examples=25)
    @given(st.integers(0, 10_000), st.floats(0.1, 100))
    def test_scale_equivariance(self, seed, c):
        rng = np.random.default_rng(seed)
        gt = rng.uniform(size=60)
        y = simulate_arx(0.0, -0.05, -0.2, gt, 0.01 * rng.normal(size=60))
        a, b = fit_arx(y, gt), fit_arx(y, c * gt)
        assert b.coefficients["GT"] == pytest.approx(a.coefficients["GT"] / c, rel=1e-9)
        assert b.robust_se["GT"] == pytest.approx(a.robust_se["GT"] / c, rel=1e-9)
        assert b.t_stats["GT"] == pytest.approx(a.t_stats["GT"], abs=1e-10)
        assert b.stars["GT"] == a.stars["GT"]

    def test_newey_west_option(self):
        rng = np.random.default_rng(8)
        gt = rng.uniform(size=74)
        y = simulate_arx(0.0, -0.05, -0.2, gt, 0.01 * rng.normal(size=74))
        res = fit_arx(y, gt, SEKind("NeweyWest"))
        assert str(res.se_kind) == "NeweyWest(3)"


class TestControls:
    def test_zero_noise_recovery(self):
        rng = np.random.default_rng(12)
        n = 74
        gt, iv, dcc = rng.uniform(size=n), rng.uniform(0.1, 0.6, size=n), rng.normal(0.1, 0.2, size=n)
        y = np.empty(n)
        y[0] = 0.0
        for t in range(1, n):
            y[t] = 0.002 - 0.05 * gt[t] - 0.2 * y[t - 1] + 0.03 * iv[t] - 0.01 * dcc[t]
        res = fit_arx_controls(y, gt, iv, dcc)
        assert res.names == ("const", "GT", "y_lag", "IV", "dCC")
        np.testing.assert_allclose(
            [res.coefficients[k] for k in res.names], [0.002, -0.05, -0.2, 0.03, -0.01], atol=1e-10
        )

    def test_missing_growth_rows_dropped(self):
        rng = np.random.default_rng(13)
        n = 40
        dcc = rng.normal(size=n)
        dcc[5:9] = np.nan
        res = fit_arx_controls(rng.normal(size=n), rng.uniform(size=n), rng.uniform(size=n), dcc)
        assert res.n_obs == n - 1 - 4

    def test_zero_controls_singular(self):
        rng = np.random.default_rng(14)
        with pytest.raises(SingularDesignError):
            fit_arx_controls(rng.normal(size=30), rng.uniform(size=30), np.zeros(30), np.zeros(30))

    def test_all_missing_growth(self):
        rng = np.random.default_rng(15)
        with pytest.raises(InsufficientDataError):
            fit_arx_controls(rng.normal(size=30), rng.uniform(size=30), rng.uniform(size=30), np.full(30, np.nan))


class TestFormatting:
    @pytest.mark.parametrize(
        "x, text",
        [(-0.0584, "-0.058"), (0.0213, "0.021"), (0.0, "0.000"), (-0.0, "0.000"),
         (-0.0005, "-0.000"), (-0.0004, "-0.000"), (0.2, "0.200"), (-0.0071, "-0.007")],
    )
    def test_fmt3(self, x, text):
        assert fmt3(x) == text

    def _result(self, coef, se, star):
        names = ("const", "GT", "y_lag")
        return RegressionResult(
            names=names,
            coefficients=dict(zip(names, [-0.0005, coef, 0.1])),
            robust_se=dict(zip(names, [0.003, se, 0.2])),
            t_stats=dict(zip(names, [0.0, coef / se, 0.5])),
            p_values=dict(zip(names, [1.0, 0.005, 0.6])),
            stars=dict(zip(names, ["", star, ""])),
            adj_r2=0.2,
            residuals=np.zeros(3),
            n_obs=73,
            se_kind=HC1,
        )

    def test_table_cells(self):
        table = format_results_table(
            {Country.IT: self._result(-0.0584, 0.0213, "***"), Country.DE: self._result(-0.032, 0.017, "**")},
            gt_label="GT_IT,t",
        )
        lines = table.splitlines()
        assert lines[0].split("|")[1].split() == ["DE", "IT"]
        gt_line = next(line for line in lines if line.startswith("GT_IT,t"))
        assert gt_line.split("|")[1].split() == ["-0.032**", "-0.058***"]
        se_line = lines[lines.index(gt_line) + 1]
        assert se_line.split("|")[1].split() == ["(0.017)", "(0.021)"]
        const_line = next(line for line in lines if line.startswith("const"))
        assert "-0.000" in const_line
        r2 = next(line for line in lines if line.startswith("adj. R2"))
        assert r2.split("|")[1].split() == ["0.200", "0.200"]

    def test_failed_fit_column(self):
        table = format_results_table({"DE": self._result(-0.03, 0.01, "***"), "FR": ValueError("boom")})
        assert "n/a" in table and "! FR: boom" in table

    def test_csv_export(self):
        text = results_to_csv({Country.IT: self._result(-0.0584, 0.0213, "***")})
        rows = text.splitlines()
        assert rows[0] == "country,term,estimate,se,t,p,stars,adj_r2,n_obs,se_kind"
        assert rows[2].startswith("IT,GT,-0.0584,0.0213,")
        assert rows[2].split(",")[6] == "***"


def test_fit_dof_matches_n_minus_k():
    rng = np.random.default_rng(21)
    X = np.column_stack([np.ones(50), rng.normal(size=50)])
    res = fit(DesignMatrix(("const", "x"), X, rng.normal(size=50)))
    assert res.dof == 48
    t = res.t_stats["x"]
    assert res.p_values["x"] == pytest.approx(t_two_sided_p(t, 48), rel=1e-8)


def test_one_sided_stars_halve_p():
    assert p_value(1.7, 70, tails=1) == pytest.approx(p_value(1.7, 70) / 2, rel=1e-14)
    # -0.309 / 0.189 gets no star two-sided, one star one-sided
    assert stars(-0.309 / 0.189, 70) == "" and stars(-0.309 / 0.189, 70, tails=1) == "*"
    with pytest.raises(ValueError):
        p_value(1.0, 10, tails=3)


def test_one_sided_footnote():
    rng = np.random.default_rng(3)
    gt = rng.uniform(size=40)
    y = 0.01 * rng.normal(size=40)
    res = fit_arx(y, gt, tails=1)
    assert res.tails == 1
    assert "(one-sided)" in format_results_table({"DE": res})
    assert "(one-sided)" not in format_results_table({"DE": fit_arx(y, gt)})
