from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alterego.analytics import (
    BootstrapSpec,
    CollinearDesign,
    CrisisCalendar,
    annualized_by_regime,
    behavioral_design,
    bootstrap_median_ci,
    bootstrap_p_values,
    cross_section_summary,
    crisis_split_stats,
    diff_in_medians_ci,
    fit_quantile,
    pinball_loss,
    quantile_regression,
    resample_indices,
    stars,
    stratified_summary,
    write_regression,
)


def type7(values, q):
    """Sort-based oracle: h = (n-1)q, interpolate between neighbours."""
    x = sorted(values)
    h = (len(x) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])


# --------------------------------------------------------------- summaries

def test_summary_odd_n():
    s = cross_section_summary([1, 2, 3, 4, 5])
    assert (s.median, s.q1, s.q3, s.n) == (3, 2, 4, 5)


def test_summary_constant():
    s = cross_section_summary([1.5] * 7)
    assert (s.median, s.q1, s.q3) == (1.5, 1.5, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60))
def test_summary_matches_sort_oracle(values):
    s = cross_section_summary(values)
    for got, q in ((s.q1, 0.25), (s.median, 0.5), (s.q3, 0.75)):
        assert got == pytest.approx(type7(values, q), abs=1e-9)
    assert s.q1 <= s.median <= s.q3


def test_summary_empty_raises():
    with pytest.raises(ValueError, match="empty"):
        cross_section_summary([np.nan])


# --------------------------------------------------------------- bootstrap

def test_spec_validation():
    with pytest.raises(ValueError, match="200"):
        BootstrapSpec(repetitions=100)
    with pytest.raises(ValueError, match="alpha"):
        BootstrapSpec(alpha=1.0)


def test_degenerate_interval():
    ci = bootstrap_median_ci([2.5] * 20, BootstrapSpec(200))
    assert ci.lower == ci.upper == ci.estimate == 2.5


def test_pivotal_identity_on_stored_draws():
    x = np.random.default_rng(0).normal(size=80)
    ci = bootstrap_median_ci(x, BootstrapSpec(400, 0.1, 7))
    d = np.sort(ci.draws)
    assert ci.lower == pytest.approx(2 * np.median(x) - type7(d, 0.95), abs=1e-12)
    assert ci.upper == pytest.approx(2 * np.median(x) - type7(d, 0.05), abs=1e-12)


def test_bootstrap_deterministic_and_seed_sensitive():
    x = np.random.default_rng(1).normal(size=50)
    a = bootstrap_median_ci(x, BootstrapSpec(200, seed=3))
    b = bootstrap_median_ci(x, BootstrapSpec(200, seed=3))
    c = bootstrap_median_ci(x, BootstrapSpec(200, seed=4))
    assert (a.lower, a.upper) == (b.lower, b.upper)
    assert (a.lower, a.upper) != (c.lower, c.upper)


def test_resample_rows_independent_of_total():
    small = resample_indices(30, BootstrapSpec(200, seed=9), tag=5)
    large = resample_indices(30, BootstrapSpec(300, seed=9), tag=5)
    np.testing.assert_array_equal(small, large[:200])


def test_bootstrap_needs_ten():
    with pytest.raises(ValueError, match="10"):
        bootstrap_median_ci(np.arange(9.0), BootstrapSpec(200))


def test_small_coverage_study():
    # reduced version of the acceptance study; loose band for 100 simulations
    rng = np.random.default_rng(2)
    hits = sum(bootstrap_median_ci(rng.normal(size=200), BootstrapSpec(200, seed=s)).contains(0.0)
               for s in range(100))
    assert 85 <= hits <= 100


def test_diff_shift_recovered():
    rng = np.random.default_rng(3)
    a = rng.normal(size=400)
    ci = diff_in_medians_ci(a + 1.5, a, BootstrapSpec(400))
    assert ci.estimate == pytest.approx(1.5, abs=1e-12)
    assert ci.contains(1.5)


def test_diff_identical_groups_contains_zero():
    a = np.random.default_rng(4).normal(size=50)
    assert diff_in_medians_ci(a, a.copy(), BootstrapSpec(200)).contains(0.0)


def test_diff_antisymmetric():
    rng = np.random.default_rng(5)
    a, b = rng.normal(0.3, 1, 60), rng.normal(0, 2, 45)
    ab = diff_in_medians_ci(a, b, BootstrapSpec(300))
    ba = diff_in_medians_ci(b, a, BootstrapSpec(300))
    assert ab.lower == pytest.approx(-ba.upper, abs=1e-12)
    assert ab.upper == pytest.approx(-ba.lower, abs=1e-12)


# ------------------------------------------------------------------ strata

def _profiles(ids, field, levels):
    return {i: SimpleNamespace(**{field: lv}) for i, lv in zip(ids, levels)}


def test_stratified_shift():
    rng = np.random.default_rng(6)
    base = rng.normal(size=41)
    ids = [f"i{k}" for k in range(82)]
    values = dict(zip(ids, np.concatenate([base, base + 2])))
    prof = _profiles(ids, "risk_aversion", ["L"] * 41 + ["H"] * 41)
    res = stratified_summary(values, prof, "risk_aversion", BootstrapSpec(200))
    assert res.summaries["H"].median - res.summaries["L"].median == pytest.approx(2.0, abs=1e-12)
    assert res.difference.estimate == pytest.approx(2.0, abs=1e-12)


def test_stratified_equal_groups_contain_zero():
    rng = np.random.default_rng(7)
    ids = [f"i{k}" for k in range(400)]
    values = dict(zip(ids, rng.normal(size=400)))
    prof = _profiles(ids, "income", rng.choice(["L", "H"], 400))
    res = stratified_summary(values, prof, "income", BootstrapSpec(500))
    assert res.difference.contains(0.0)


def test_stratified_single_investor_level():
    ids = [f"i{k}" for k in range(12)]
    values = dict(zip(ids, np.arange(12.0)))
    prof = _profiles(ids, "education", ["H"] + ["L"] * 11)
    res = stratified_summary(values, prof, "education", BootstrapSpec(200))
    s = res.summaries["H"]
    assert (s.median, s.q1, s.q3, s.n) == (0.0, 0.0, 0.0, 1)
    assert res.median_cis["H"] is None and res.difference is None


def test_stratified_errors():
    prof = _profiles(["a"], "income", ["L"])
    with pytest.raises(ValueError, match="unknown stratum"):
        stratified_summary({"a": 1.0}, prof, "gender")
    with pytest.raises(ValueError, match="level H"):
        stratified_summary({"a": 1.0}, prof, "income")


# ------------------------------------------------------------------ crisis

def test_regime_boundaries():
    cal = CrisisCalendar()
    assert cal.regime("2008-03") == "during"
    assert cal.regime("2007-11") == "pre"
    assert cal.regime("2007-12") == "during"
    assert cal.regime("2009-06") == "during"
    assert cal.regime("2009-07") == "post"


@given(st.integers(1990 * 12, 2030 * 12))
def test_regime_partition(k):
    m = pd.Period(year=k // 12, month=k % 12 + 1, freq="M")
    cal = CrisisCalendar()
    hits = [m < pd.Period("2007-12", "M"),
            pd.Period("2007-12", "M") <= m <= pd.Period("2009-06", "M"),
            m > pd.Period("2009-06", "M")]
    assert sum(hits) == 1
    assert cal.regime(m) == ("pre", "during", "post")[hits.index(True)]


def test_crisis_constants_recovered():
    idx = pd.period_range("2006-01", "2010-12", freq="M")
    const = {"pre": 0.01, "during": -0.02, "post": 0.005}
    col = [const[CrisisCalendar().regime(m)] for m in idx]
    panel = pd.DataFrame({"a": col, "b": col}, index=idx)
    stats = crisis_split_stats(panel)
    for reg, c in const.items():
        assert stats[reg].median == pytest.approx(1200 * c, abs=1e-12)
        assert stats[reg].q1 == stats[reg].q3 == stats[reg].median


def test_absent_investor_excluded_from_regime_only():
    idx = pd.period_range("2007-06", "2009-12", freq="M")
    panel = pd.DataFrame({"a": 0.01, "b": np.nan}, index=idx)
    panel.loc[pd.Period("2010-01", "M"):, "b"] = 0.0
    panel.loc[idx[-3:], "b"] = 0.02
    per = annualized_by_regime(panel, CrisisCalendar())
    assert list(per["pre"].index) == ["a"] and list(per["during"].index) == ["a"]
    assert sorted(per["post"].index) == ["a", "b"]


# ------------------------------------------------------- quantile regression

def test_pinball_half_is_half_l1():
    u = np.random.default_rng(8).normal(size=1000)
    np.testing.assert_allclose(pinball_loss(u, 0.5), np.abs(u) / 2, atol=1e-12)


def test_median_slope_recovered():
    rng = np.random.default_rng(9)
    x = rng.normal(size=5000)
    y = 2 * x + rng.standard_t(3, 5000)
    res = quantile_regression(y, np.column_stack([np.ones(5000), x]), ["intercept", "x"], 0.5)
    assert abs(res.coef[1] - 2) < 0.1
    assert np.isnan(res.p_values).all()


@pytest.mark.parametrize("tau", [0.05, 0.2, 0.5, 0.9])
def test_intercept_only_is_sample_quantile(tau):
    y = np.random.default_rng(10).normal(size=203)
    b = fit_quantile(y, np.ones((203, 1)), tau)[0]
    # unique minimizer when n*tau is not an integer: the ceil(n*tau)-th order statistic
    assert b == pytest.approx(np.sort(y)[math.ceil(203 * tau) - 1], abs=1e-9)


def test_intercept_quantiles_monotone():
    y = np.random.default_rng(11).exponential(size=151)
    fits = [fit_quantile(y, np.ones((151, 1)), t)[0] for t in (0.05, 0.1, 0.2, 0.5, 0.8, 0.9, 0.95)]
    assert all(a <= b + 1e-9 for a, b in zip(fits, fits[1:]))


def test_collinear_dummies_named():
    q = np.tile([1, 2, 3, 4], 30)
    X, names = behavioral_design(np.linspace(0, 1, 120), q)
    X = np.column_stack([X, (q == 1).astype(float)])
    with pytest.raises(CollinearDesign, match="freq_q1"):
        quantile_regression(np.zeros(120), X, names + ["freq_q1"])


def test_too_few_observations():
    with pytest.raises(ValueError, match="more than"):
        quantile_regression(np.zeros(20), np.ones((20, 2)) * [1, 0] + [0, 1] * np.arange(20)[:, None],
                            ["a", "b"])


def test_bootstrap_p_values_and_stars(tmp_path):
    rng = np.random.default_rng(12)
    n = 300
    x, z = rng.normal(size=n), rng.normal(size=n)
    y = 1.0 * x + rng.normal(size=n)
    X = np.column_stack([np.ones(n), x, z])
    res = quantile_regression(y, X, ["intercept", "x", "z"], 0.5, BootstrapSpec(200, seed=1))
    assert res.p_values[1] < 0.01 and stars(res.p_values[1]) == "***"
    assert res.p_values[2] > 0.05
    write_regression([res], tmp_path / "r.csv")
    df = pd.read_csv(tmp_path / "r.csv", keep_default_na=False)
    assert list(df.columns) == ["tau", "covariate", "coefficient", "p_value", "stars"]
    assert df["stars"].iloc[1] == "***"


def test_p_value_definition():
    draws = np.array([[1.0, -1.0], [2.0, 1.0], [3.0, 2.0], [-1.0, 3.0]])
    np.testing.assert_allclose(bootstrap_p_values(draws), [0.5, 0.5])
    assert stars(0.005) == "***" and stars(0.03) == "**" and stars(0.07) == "*" and stars(0.2) == ""
