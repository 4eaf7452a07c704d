from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from alterego.forecast import (
    KINDS,
    ForecastConfig,
    SplitSpec,
    combine_panels,
    en_l2_ranking,
    ensemble_predict,
    evaluate_and_select,
    fit_elastic_net,
    fit_neural_net,
    fit_ols,
    fit_random_forest,
    grow_tree,
    load_forecasts,
    loss_and_grad,
    make_features,
    negative_forecast_fraction,
    select_winner,
    train_asset,
    window_bounds,
    write_forecasts,
    InsufficientHistory,
)
from alterego.forecast.features import FeatureSet, N_FEATURES
from alterego.forecast.forest import grow_forest
from alterego.forecast.linear import RankDeficient, elastic_net, en_objective, soft_threshold
from alterego.forecast.nnet import TrainingDiverged, init_params
from alterego.market import PREDICTORS, PredictorPanel

TINY = ForecastConfig(
    en_alphas=(0.5, 1.0), en_n_lambdas=10,
    rf_trees=(5, 10), rf_depths=(2, 3), rf_subsets=(3, 22),
    nn_learning_rates=(1e-2,), nn_l2s=(1e-3,), nn_max_epochs=15, nn_patience=5,
)


def months(n, start="2000-01"):
    return np.datetime64(start, "M") + np.arange(n)


def predictor_panel(values, start="2000-01"):
    return PredictorPanel(months(len(values), start), values)


class Const:
    def __init__(self, v):
        self.v = v

    def predict(self, X):
        return np.full(len(X), self.v, dtype=float)


class Fixed:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def predict(self, X):
        return self.values[: len(X)]


# --------------------------------------------------------------- features

def test_four_months_three_rows():
    p = predictor_panel(np.random.default_rng(0).normal(size=(4, 21)))
    fs = make_features(months(4), [0.01, 0.02, -0.01, 0.03], p, min_months=0)
    assert len(fs) == 3
    assert fs.X.shape == (3, N_FEATURES)
    np.testing.assert_array_equal(fs.X[:, 0], [0.01, 0.02, -0.01])
    np.testing.assert_array_equal(fs.y, [0.02, -0.01, 0.03])
    np.testing.assert_array_equal(fs.X[:, 1:], p.values[:3])
    assert str(fs.months[0]) == "2000-01"


def test_constant_predictors_identical_x_block():
    p = predictor_panel(np.tile(np.arange(21.0), (40, 1)))
    fs = make_features(months(40), np.random.default_rng(1).normal(0, 0.05, 40), p)
    assert (fs.X[:, 1:] == fs.X[0, 1:]).all()


def test_insufficient_history():
    p = predictor_panel(np.zeros((40, 21)))
    r = np.full(40, np.nan)
    r[-20:] = 0.01
    with pytest.raises(InsufficientHistory):
        make_features(months(40), r, p)


def test_missing_month_drops_adjacent_rows():
    p = predictor_panel(np.zeros((10, 21)))
    r = np.arange(10) * 0.01
    r[4] = np.nan
    fs = make_features(months(10), r, p, min_months=0)
    assert len(fs) == 7
    assert "2000-04" not in [str(m) for m in fs.months]
    assert "2000-05" not in [str(m) for m in fs.months]


def test_leakage_canary():
    rng = np.random.default_rng(2)
    n = 200
    x = rng.normal(size=(n, 21))
    r = np.empty(n)
    r[0] = 0
    r[1:] = 0.05 * x[:-1, PREDICTORS.index("dfy")] + 0.01 * rng.normal(size=n - 1)
    p = predictor_panel(x)
    fs = make_features(months(n), r, p)
    fit = fit_ols(fs.X, fs.y)
    r2 = 1 - np.var(fs.y - fit.predict(fs.X)) / np.var(fs.y)
    shifted = FeatureSet(fs.months[:-1], fs.X[:-1], fs.y[1:])
    fit2 = fit_ols(shifted.X, shifted.y)
    r2b = 1 - np.var(shifted.y - fit2.predict(shifted.X)) / np.var(shifted.y)
    assert r2 > 0.9
    assert r2b < 0.3


def test_split_sizes_and_order():
    s = SplitSpec()
    assert s.sizes(119) == (83, 24, 12)
    a, b, c = s.split(119)
    assert a.stop == b.start and b.stop == c.start and c.stop == 119
    with pytest.raises(ValueError):
        SplitSpec(0.7, 0.2, 0.2)


# -------------------------------------------------------------------- OLS

def test_ols_exact_recovery():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 22))
    y = 0.3 + 2.5 * X[:, 4]
    m = fit_ols(X, y)
    expect = np.zeros(22)
    expect[4] = 2.5
    np.testing.assert_allclose(m.coef, expect, atol=1e-10)
    assert m.intercept == pytest.approx(0.3, abs=1e-10)


def test_ols_intercept_only():
    X = np.random.default_rng(4).normal(size=(50, 22))
    m = fit_ols(X, np.full(50, 0.07))
    assert m.intercept == pytest.approx(0.07, abs=1e-12)
    np.testing.assert_allclose(m.coef, 0, atol=1e-12)


def test_ols_noise_overfits_on_average():
    gaps = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 22))
        y = rng.normal(size=60)
        m = fit_ols(X[:40], y[:40])
        train = np.mean((y[:40] - m.predict(X[:40])) ** 2)
        test = np.mean((y[40:] - m.predict(X[40:])) ** 2)
        gaps.append(test - train)
    assert np.mean(gaps) > 0


def test_ols_rank_deficient():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 3))
    X = np.column_stack([X, X[:, 0]])
    y = X[:, 0] + rng.normal(0, 0.1, 40)
    with pytest.raises(RankDeficient):
        fit_ols(X, y, ridge_fallback=False)
    m = fit_ols(X, y)
    assert m.tuning["ridge"] > 0 and np.isfinite(m.coef).all()
    assert m.coef[0] == pytest.approx(m.coef[3], rel=1e-6)


# ------------------------------------------------------------ elastic net

@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_en_lambda_zero_is_ols(alpha):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(83, 22)) * rng.uniform(0.01, 5, 22) + rng.normal(size=22)
    y = X @ rng.normal(0, 0.01, 22) + rng.normal(0, 0.05, 83)
    en = elastic_net(X, y, alpha, 0.0)
    ols = fit_ols(X, y)
    np.testing.assert_allclose(en.coef, ols.coef, rtol=0, atol=1e-8)
    assert en.intercept == pytest.approx(ols.intercept, abs=1e-8)


def _orthonormal_design(n, p, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, p))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    return Q * np.sqrt(n)


@pytest.mark.parametrize("alpha,lam", [(1.0, 0.1), (1.0, 0.4), (0.5, 0.3), (0.25, 1.0)])
def test_en_orthonormal_closed_form(alpha, lam):
    n, p = 100, 6
    Z = _orthonormal_design(n, p, 7)
    rng = np.random.default_rng(8)
    y = 0.02 + Z @ rng.normal(0, 0.2, p) + rng.normal(0, 0.1, n)
    beta_ols = Z.T @ (y - y.mean()) / n
    expect = soft_threshold(beta_ols, alpha * lam / 2) / (1 + (1 - alpha) * lam / 2)
    m = elastic_net(Z, y, alpha, lam)
    np.testing.assert_allclose(m.std_coef, expect, atol=1e-12)


def test_en_large_lambda_zeroes():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(50, 22))
    y = X[:, 0] + rng.normal(size=50)
    m = elastic_net(X, y, 1.0, 1e6)
    assert np.all(m.coef == 0)
    assert m.intercept == pytest.approx(y.mean(), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(0, 1), log_lam=st.floats(-4, 0))
def test_en_objective_below_ols(seed, alpha, log_lam):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 8))
    y = X @ rng.normal(0, 0.3, 8) + rng.normal(size=60)
    lam = 10 ** log_lam
    m = elastic_net(X, y, alpha, lam)
    Z = (X - X.mean(0)) / X.std(0)
    b_ols = fit_ols(Z, y).coef
    assert en_objective(Z, y, y.mean(), m.std_coef, alpha, lam) <= \
        en_objective(Z, y, y.mean(), b_ols, alpha, lam) + 1e-12


def test_en_constant_feature_dropped():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(60, 5))
    X[:, 2] = 3.0
    y = X[:, 0] + rng.normal(0, 0.1, 60)
    m = fit_elastic_net(X[:40], y[:40], X[40:], y[40:])
    assert m.coef[2] == 0 and m.std_coef[2] == 0


def test_en_tuning_from_grid():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(119, 22))
    y = 0.3 * X[:, 3] + rng.normal(size=119)
    m = fit_elastic_net(X[:83], y[:83], X[83:107], y[83:107])
    assert m.tuning["alpha"] in (0.0, 0.25, 0.5, 0.75, 1.0)
    assert m.std_coef[3] > 0


# ------------------------------------------------------------ random forest

def test_stump_leaf_means():
    X = np.array([[0.0]] * 6 + [[1.0]] * 6)
    y = np.array([1.0, 1.2, 0.8, 1.1, 0.9, 1.0, 5.0, 5.5, 4.5, 5.2, 4.8, 5.0])
    t = grow_tree(X, y, max_depth=1, max_features=1, min_leaf=1, rng=np.random.default_rng(0))
    pred = t.predict(np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(pred, [y[:6].mean(), y[6:].mean()])


def test_forest_determinism():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(80, 22))
    y = rng.normal(size=80)
    a = fit_random_forest(X[:60], y[:60], X[60:], y[60:], seed=5, trees=(10, 20), depths=(2, 4))
    b = fit_random_forest(X[:60], y[:60], X[60:], y[60:], seed=5, trees=(10, 20), depths=(2, 4))
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert a.tuning == b.tuning


def test_forest_beats_ols_on_step_function():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(300, 22))
    y = np.where(X[:, 5] > 0.3, 1.0, -1.0) + 0.2 * rng.normal(size=300)
    rf = fit_random_forest(X[:150], y[:150], X[150:220], y[150:220], seed=1, trees=(50,), depths=(3, 5))
    ols = fit_ols(X[:150], y[:150])
    mse_rf = np.mean((rf.predict(X[220:]) - y[220:]) ** 2)
    mse_ols = np.mean((ols.predict(X[220:]) - y[220:]) ** 2)
    assert mse_rf < mse_ols


@pytest.mark.parametrize("depth", [1, 3, 5])
def test_truncated_tree_equals_shallow_tree(depth):
    rng = np.random.default_rng(14)
    X = rng.normal(size=(90, 10))
    y = X[:, 0] ** 2 + rng.normal(size=90)
    deep = grow_tree(X, y, 8, 4, 5, np.random.default_rng(99))
    shallow = grow_tree(X, y, depth, 4, 5, np.random.default_rng(99))
    np.testing.assert_array_equal(deep.predict(X, depth), shallow.predict(X))
    np.testing.assert_array_equal(deep.predict_depths(X, [depth])[0], shallow.predict(X))


def test_forest_prefix_is_smaller_forest():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(60, 6))
    y = rng.normal(size=60)
    big = grow_forest(X, y, 30, 3, 2, 5, 7)
    small = grow_forest(X, y, 10, 3, 2, 5, 7)
    for a, b in zip(big[:10], small):
        np.testing.assert_array_equal(a.predict(X), b.predict(X))


# ------------------------------------------------------------- neural net

def _flat(params):
    return np.concatenate([p.ravel() for p in params])


@pytest.mark.parametrize("seed", range(3))
def test_nn_gradient_check(seed):
    rng = np.random.default_rng(seed)
    params = [p + rng.normal(0, 0.3, p.shape) for p in init_params(22, rng)]
    X = rng.normal(size=(5, 22))
    y = rng.normal(size=5)
    l2 = 1e-3
    _, grads = loss_and_grad(params, X, y, l2)
    h = 1e-6
    for layer, (p, g) in enumerate(zip(params, grads)):
        num = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_and_grad(params, X, y, l2)[0]
            p[idx] = old - h
            down = loss_and_grad(params, X, y, l2)[0]
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        rel = np.abs(num - g) / np.maximum(np.maximum(np.abs(num), np.abs(g)), 1e-7)
        assert rel.max() < 1e-4, f"layer {layer}"


def test_nn_zero_init_loss_is_target_variance():
    params = init_params(22, None, zeros=True)
    X = np.random.default_rng(16).normal(size=(40, 22))
    y = np.zeros(40)
    loss, grads = loss_and_grad(params, X, y, 1e-3)
    assert loss == 0.0
    t = np.random.default_rng(17).normal(size=40)
    t = (t - t.mean()) / t.std()
    loss, _ = loss_and_grad(params, X, t, 1e-3)
    assert loss == pytest.approx(np.var(t))
    m = fit_neural_net(X[:30], y[:30], X[30:], y[30:], seed=0, learning_rates=(1e-2,), l2s=(1e-3,),
                       max_epochs=5, zeros=True)
    assert np.isfinite(m.predict(X)).all()


def test_nn_recovers_linear_target():
    rng = np.random.default_rng(18)
    n = 400
    X = rng.normal(size=(n, 22))
    y = X @ rng.normal(0, 0.3, 22) + 0.3 * rng.normal(size=n)
    tr, va, te = slice(0, 280), slice(280, 360), slice(360, n)
    nn = fit_neural_net(X[tr], y[tr], X[va], y[va], seed=3, learning_rates=(0.05,), l2s=(1e-5,),
                        max_epochs=1500, patience=100)
    ols = fit_ols(X[tr], y[tr])
    mse_nn = np.mean((nn.predict(X[te]) - y[te]) ** 2)
    mse_ols = np.mean((ols.predict(X[te]) - y[te]) ** 2)
    assert mse_nn <= 2 * mse_ols


def test_nn_divergence_raises():
    rng = np.random.default_rng(19)
    X = rng.normal(size=(64, 22))
    y = rng.normal(size=64)
    with pytest.raises(TrainingDiverged):
        fit_neural_net(X[:48], y[:48], X[48:], y[48:], seed=0, learning_rates=(1e12,),
                       l2s=(0.0,), max_epochs=50)


def test_nn_determinism():
    rng = np.random.default_rng(20)
    X = rng.normal(size=(60, 22))
    y = rng.normal(size=60)
    a = fit_neural_net(X[:40], y[:40], X[40:], y[40:], seed=9, max_epochs=20)
    b = fit_neural_net(X[:40], y[:40], X[40:], y[40:], seed=9, max_epochs=20)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))


# ---------------------------------------------------------------- ensemble

def test_ensemble_mean():
    X = np.zeros((3, 22))
    models = {"OLS": Const(1), "EN": Const(2), "RF": Const(3), "NN": Const(4)}
    np.testing.assert_array_equal(ensemble_predict(models, X), 2.5)
    same = {k: Const(0.7) for k in models}
    np.testing.assert_allclose(ensemble_predict(same, X), 0.7, rtol=0, atol=1e-16)
    with pytest.raises(ValueError):
        ensemble_predict({"OLS": Const(1)}, X)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_ensemble_convexity(seed):
    rng = np.random.default_rng(seed)
    n = 30
    target = rng.normal(size=n)
    preds = {k: Fixed(target + rng.normal(0, rng.uniform(0.1, 2), n)) for k in ("OLS", "EN", "RF", "NN")}
    X = np.zeros((n, 22))
    ens = ensemble_predict(preds, X)
    stacked = np.stack([m.values for m in preds.values()])
    assert np.all(ens >= stacked.min(0) - 1e-15) and np.all(ens <= stacked.max(0) + 1e-15)
    mses = [np.mean((m.values - target) ** 2) for m in preds.values()]
    assert np.mean((ens - target) ** 2) <= max(mses)


# -------------------------------------------------------------- selection

def test_winner_argmin():
    assert select_winner({"OLS": .02, "EN": .010, "RF": .011, "NN": .009, "Comb": .0095}) == "NN"


def test_winner_tie_priority():
    base = {"OLS": 0.01, "EN": 0.02, "RF": 0.01, "NN": 0.03, "Comb": 0.04}
    assert select_winner(base) == "RF"
    tie = dict(base, EN=0.01 + 1e-15)
    assert select_winner(tie) == "EN"
    assert select_winner({k: 0.5 for k in KINDS}) == "EN"


def test_en_l2_ranking_single_predictor():
    coefs = {f"A{i}": np.eye(22)[PREDICTORS.index("dfy") + 1] * (i + 1) for i in range(3)}
    r = en_l2_ranking(coefs)
    assert r.iloc[0]["predictor"] == "dfy" and r.iloc[0]["l2_share"] == 1.0
    assert list(r["predictor"][1:]) == [p for p in PREDICTORS if p != "dfy"]
    assert len(r) == 21


def test_en_l2_ranking_single_asset():
    v = np.random.default_rng(21).normal(size=22)
    r = en_l2_ranking({"A": v})
    order = [PREDICTORS[j] for j in np.argsort(-np.abs(v[1:]), kind="stable")]
    assert list(r["predictor"]) == order


def test_negative_fraction():
    from alterego.forecast.lab import _empty_panel
    panel = _empty_panel()
    panel.forecasts = pd.DataFrame({"month": ["2001-01"] * 4, "asset_id": list("abcd"),
                                    "forecast": [-0.1, 0.2, -0.3, 0.4], "winner": "EN"})
    assert negative_forecast_fraction(panel, "2001-01") == 0.5
    panel.forecasts["forecast"] = [0.1, 0.2, 0.3, 0.4]
    assert negative_forecast_fraction(panel, np.datetime64("2001-01")) == 0.0
    assert np.isnan(negative_forecast_fraction(panel, "2001-02"))


def test_window_bounds():
    assert window_bounds(144) == [(0, 120), (12, 132), (24, 144)]
    b = window_bounds(150)
    assert b[:3] == [(0, 120), (12, 132), (24, 144)] and b[-1] == (30, 150)
    assert window_bounds(60) == [(0, 60)]


def test_test_origins_tile_without_gaps():
    split = SplitSpec()
    origins = []
    for lo, hi in window_bounds(180):
        n_rows = hi - lo - 1
        _, _, te = split.split(n_rows)
        origins.append(np.arange(lo, lo + n_rows)[te])
    regular = np.concatenate(origins[:-1])
    assert np.array_equal(regular, np.arange(regular[0], regular[-1] + 1))
    assert origins[-1][-1] == 178


# ----------------------------------------------------------- end to end

def _fs(seed, n=119):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 22))
    y = 0.02 * X[:, 11] + 0.05 * rng.normal(size=n)
    return FeatureSet(months(n), X, y)


def test_train_asset_no_lookahead():
    fs = _fs(22)
    a = train_asset("S001", fs, TINY, seed=4)
    y2 = fs.y.copy()
    y2[-12:] += 10.0
    X2 = fs.X.copy()
    X2[-12:] *= 3
    b = train_asset("S001", FeatureSet(fs.months, X2, y2), TINY, seed=4)
    Xp = np.random.default_rng(0).normal(size=(7, 22))
    for k in ("OLS", "EN", "RF", "NN"):
        np.testing.assert_array_equal(a.models[k].predict(Xp), b.models[k].predict(Xp))


def test_panel_assembly_and_csv(tmp_path):
    results = [train_asset(f"S{i}", _fs(30 + i), TINY, seed=i) for i in range(4)]
    panel = evaluate_and_select(results, window=0)
    assert len(panel.forecasts) == 4 * 12
    assert panel.win_fractions["win_fraction"].sum() == pytest.approx(1.0)
    for r in results:
        rows = panel.forecasts[panel.forecasts["asset_id"] == r.asset]
        assert (rows["winner"] == r.winner).all()
        assert min(r.mse.values()) == r.mse[r.winner]
    write_forecasts(panel, tmp_path / "f.csv")
    back = load_forecasts(tmp_path / "f.csv")
    assert list(back.forecasts["month"]) == list(panel.forecasts["month"])
    np.testing.assert_allclose(back.forecasts["forecast"], panel.forecasts["forecast"], rtol=1e-11)


def test_combine_newest_wins():
    from alterego.forecast.lab import _empty_panel
    p1, p2 = _empty_panel(), _empty_panel()
    p1.forecasts = pd.DataFrame({"month": ["2001-01", "2001-02"], "asset_id": ["a", "a"],
                                 "forecast": [1.0, 2.0], "winner": "EN"})
    p2.forecasts = pd.DataFrame({"month": ["2001-02", "2001-03"], "asset_id": ["a", "a"],
                                 "forecast": [20.0, 30.0], "winner": "NN"})
    p1.metrics = p2.metrics = pd.DataFrame({"window": [0], "asset_id": ["a"], "kind": ["EN"],
                                            "mse": [1.0], "mae": [1.0]})
    c = combine_panels([p1, p2])
    assert list(c.forecasts["forecast"]) == [1.0, 20.0, 30.0]


# ------------------------------------------------- synthetic rolling runs

SMALL = ForecastConfig(
    window_months=60, en_n_lambdas=20,
    rf_trees=(10, 20), rf_depths=(3, 5), rf_subsets=(5, 22),
    nn_learning_rates=(1e-2,), nn_l2s=(1e-3,), nn_max_epochs=40, nn_patience=10,
)


@pytest.fixture(scope="module")
def bearish_run():
    from alterego.market import Regime, SyntheticMarketSpec, aggregate_to_monthly, generate_synthetic_market
    spec = SyntheticMarketSpec(
        n_assets=12, n_etfs=0, n_days=21 * 101, idio_vol=0.01, coupling={"dfy": -0.05}, seed=3,
        regimes=(Regime("2000-09", "2001-03", predictor_shift={"dfy": 3.0}),),
    )
    daily, preds = generate_synthetic_market(spec)
    monthly = aggregate_to_monthly(daily)
    return monthly, preds, rolling_retrain(monthly, preds, SMALL, seed=11)


from alterego.forecast import rolling_retrain  # noqa: E402
from alterego.forecast.lab import l2_rankings  # noqa: E402


def test_rolling_dfy_ranked_top3(bearish_run):
    _, _, res = bearish_run
    ranks = l2_rankings(res.combined)
    for w, g in ranks.groupby("window"):
        assert "dfy" in list(g.sort_values("rank")["predictor"][:3])


def test_rolling_bearish_regime_raises_negative_fraction(bearish_run):
    _, _, res = bearish_run
    panel = res.combined
    months_ = sorted(set(panel.forecasts["month"]))
    regime = [m for m in months_ if "2000-08" <= m <= "2001-02"]
    before = [m for m in months_ if m < "2000-08"]
    assert regime and before
    inside = np.mean([negative_forecast_fraction(panel, m) for m in regime])
    outside = np.mean([negative_forecast_fraction(panel, m) for m in before])
    assert inside > outside


def test_rolling_win_fractions(bearish_run):
    _, _, res = bearish_run
    wf = res.combined.win_fractions
    sums = wf.groupby("window")["win_fraction"].sum()
    np.testing.assert_allclose(sums, 1.0)


def test_stationary_win_fractions_level():
    from alterego.market import SyntheticMarketSpec, aggregate_to_monthly, generate_synthetic_market
    spec = SyntheticMarketSpec(n_assets=20, n_etfs=0, n_days=21 * 146, idio_vol=0.01,
                               coupling={"dfy": 0.05}, seed=4)
    daily, preds = generate_synthetic_market(spec)
    cfg = ForecastConfig(en_n_lambdas=20, rf_trees=(10, 20), rf_depths=(3, 5), rf_subsets=(5, 22),
                         nn_learning_rates=(1e-2,), nn_l2s=(1e-3,), nn_max_epochs=40, nn_patience=10)
    res = rolling_retrain(aggregate_to_monthly(daily), preds, cfg, seed=5)
    wf = res.combined.win_fractions
    assert wf["window"].nunique() >= 3
    linear = wf[wf["kind"].isin(["EN", "OLS"])].groupby("window")["win_fraction"].sum()
    assert (linear - linear.mean()).abs().max() <= 0.35


def test_rolling_determinism(bearish_run):
    monthly, preds, res = bearish_run
    again = rolling_retrain(monthly, preds, SMALL, seed=11, assets=monthly.asset_ids[:3])
    sub = res.combined.forecasts[res.combined.forecasts["asset_id"].isin(monthly.asset_ids[:3])]
    a = sub.sort_values(["month", "asset_id"]).reset_index(drop=True)
    b = again.combined.forecasts.sort_values(["month", "asset_id"]).reset_index(drop=True)
    pd.testing.assert_frame_equal(a, b)
