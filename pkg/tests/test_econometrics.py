import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disclosure_audit.econometrics import (
    WelfareRecord,
    aggregate_summary,
    car,
    crv1_covariance,
    discovery_velocity,
    event_window_days,
    ols_interaction,
    spearman,
    welch_t,
    welfare_gap,
)
from disclosure_audit.errors import (
    DegenerateVariance,
    IncompleteWindow,
    RankDeficient,
    TooFewClusters,
    ZeroShock,
    ZeroVariance,
)
from disclosure_audit.ingest import ReturnSeries
from conftest import flat_returns

PLANTED = np.array([0.0012, -0.0004, 0.0, 2.29e-05])


def test_car_examples(backend):
    r = flat_returns("2023-01-02", 40)
    assert car(r, np.datetime64("2023-01-04")) == 0.0
    days = event_window_days(np.datetime64("2023-01-04"))
    r2 = ReturnSeries(r.dates, r.firm_return + 0.001, r.benchmark_return)
    assert car(r2, np.datetime64("2023-01-04")) == pytest.approx(0.01, abs=1e-15)
    keep = r.dates != days[6]
    gap = ReturnSeries(r.dates[keep], r.firm_return[keep], r.benchmark_return[keep])
    with pytest.raises(IncompleteWindow):
        car(gap, np.datetime64("2023-01-04"))


def test_event_window_weekend_rolls_back():
    sat = event_window_days(np.datetime64("2023-01-07"))
    fri = event_window_days(np.datetime64("2023-01-06"))
    np.testing.assert_array_equal(sat, fri)
    assert str(fri[0]) == "2023-01-09" and len(fri) == 10


def test_welfare_and_velocity_examples():
    assert welfare_gap(-0.001, -0.0014) == pytest.approx(0.0004)
    assert welfare_gap(-0.002, -0.002) == 0
    assert welfare_gap(-0.001, 0.0) == -0.001
    assert discovery_velocity(-0.00307, -0.001) == pytest.approx(3.07)
    assert discovery_velocity(-0.00123, -0.001) == pytest.approx(1.23)
    assert discovery_velocity(0.0, -0.01) == 0.0
    with pytest.raises(ZeroShock):
        discovery_velocity(0.01, 0.0)
    rec = WelfareRecord.build("a", 0.0, 0.003)
    assert rec.velocity is None and rec.welfare_gap == -0.003


@settings(max_examples=100)
@given(st.floats(-1, 1).filter(lambda x: abs(x) > 1e-6), st.floats(-1, 1), st.floats(0.1, 10))
def test_welfare_identity_and_velocity_scale(alpha, car_value, scale):
    rec = WelfareRecord.build("a", alpha, car_value)
    assert rec.welfare_gap + rec.car == pytest.approx(alpha, abs=1e-15)
    assert discovery_velocity(car_value * scale, alpha * scale) == pytest.approx(rec.velocity, rel=1e-12)


def _design(zc, zp):
    return np.column_stack([np.ones_like(zc), zc, zp, zc * zp])


def _oracle_crv1(X, y, clusters):
    """Normal equations plus an explicit per-cluster sandwich."""
    n, k = X.shape
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    e = y - X @ beta
    groups = sorted(set(clusters))
    meat = np.zeros((k, k))
    for g in groups:
        idx = [i for i, c in enumerate(clusters) if c == g]
        s = sum(X[i] * e[i] for i in idx)
        meat += np.outer(s, s)
    G = len(groups)
    c = G / (G - 1) * (n - 1) / (n - k)
    inv = np.linalg.inv(xtx)
    return beta, np.sqrt(np.diag(c * inv @ meat @ inv))


def _fixture(n=50, seed=0, noise=1e-4):
    rng = np.random.default_rng(seed)
    zc, zp = rng.normal(size=n), rng.normal(size=n)
    y = _design(zc, zp) @ PLANTED + noise * rng.normal(size=n)
    clusters = [f"c{i % 7}" for i in range(n)]
    return y, zc, zp, clusters


def test_ols_noise_free_exact(backend):
    y, zc, zp, cl = _fixture(200, noise=0.0)
    res = ols_interaction(y, zc, zp, cl)
    np.testing.assert_allclose(res.coef, PLANTED, atol=1e-12, rtol=0)


def test_ols_matches_matrix_oracle(backend):
    y, zc, zp, cl = _fixture(50)
    res = ols_interaction(y, zc, zp, cl)
    beta, se = _oracle_crv1(_design(zc, zp), y, cl)
    np.testing.assert_allclose(res.coef, beta, rtol=1e-10)
    np.testing.assert_allclose(res.se, se, rtol=1e-10)
    np.testing.assert_allclose(res.t_stats, res.coef / res.se, rtol=1e-14)
    assert res.n_clusters == 7 and res.n_obs == 50
    assert res.p_values[0] == pytest.approx(math.erfc(abs(res.t_stats[0]) / math.sqrt(2)))


def test_crv1_singletons_equal_hc1():
    y, zc, zp, _ = _fixture(40, seed=2)
    X = _design(zc, zp)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    e = y - X @ beta
    cov, _ = crv1_covariance(X, e, np.arange(40))
    inv = np.linalg.inv(X.T @ X)
    hc1 = 40 / (40 - 4) * inv @ (X.T * e**2) @ X @ inv
    np.testing.assert_allclose(cov, hc1, rtol=1e-10)


def test_ols_residuals_orthogonal():
    y, zc, zp, cl = _fixture(80, seed=3, noise=1.0)
    res = ols_interaction(y, zc, zp, cl)
    X = _design(zc, zp)
    Xn = X / np.linalg.norm(X, axis=0)
    assert np.abs(Xn.T @ (res.residuals / np.linalg.norm(res.residuals))).max() < 1e-8


def test_ols_constant_and_errors():
    rng = np.random.default_rng(1)
    zc, zp = rng.normal(size=20), rng.normal(size=20)
    res = ols_interaction(np.full(20, 0.5), zc, zp, np.arange(20) % 4)
    assert res.beta0 == pytest.approx(0.5, abs=1e-14)
    assert max(abs(res.beta1), abs(res.beta2), abs(res.gamma)) < 1e-14
    with pytest.raises(RankDeficient):
        ols_interaction(rng.normal(size=20), zc, zc, np.arange(20) % 4)
    with pytest.raises(TooFewClusters):
        ols_interaction(rng.normal(size=20), zc, zp, np.zeros(20))
    with pytest.raises(ValueError):
        ols_interaction([1, 2, 3], [1, 2, 3], [1, 2, 3], [0, 1, 2])


def test_ols_with_controls_names():
    y, zc, zp, cl = _fixture(60, seed=4)
    res = ols_interaction(y, zc, zp, cl, controls=np.log(np.arange(1, 61)), control_names=["log_size"])
    assert res.names[-1] == "log_size" and len(res.coef) == 5
    d = res.as_dict()
    assert d["coefficients"][4]["name"] == "log_size"


def test_welch_examples():
    assert welch_t([1, 2, 3], [4, 5, 6]) == pytest.approx(-3 * math.sqrt(1.5), abs=1e-12)
    assert welch_t([1, 2, 4], [1, 2, 4]) == 0.0
    # unequal sizes and variances, by hand: means 2.5 and 10, vars 5/3 and 4
    assert welch_t([1, 2, 3, 4], [8, 10, 12]) == pytest.approx(-7.5 / math.sqrt(5 / 12 + 4 / 3), abs=1e-12)
    with pytest.raises(DegenerateVariance):
        welch_t([2, 2], [3, 3])
    with pytest.raises(ValueError):
        welch_t([1], [2, 3])


def test_spearman_examples(backend):
    x = np.arange(10.0)
    assert spearman(x, x**3) == pytest.approx(1.0, abs=1e-15)
    assert spearman(x, -x) == pytest.approx(-1.0, abs=1e-15)
    # tie-heavy fixture; mid-ranks worked by hand: sum dxdy = 33, sxx = syy = 39.5
    rho = spearman([1, 2, 2, 3, 3, 3, 4, 5], [2, 1, 2, 2, 3, 3, 5, 4])
    assert rho == pytest.approx(33 / 39.5, abs=1e-12)
    with pytest.raises(ZeroVariance):
        spearman([1, 1, 1], [1, 2, 3])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=30))
def test_spearman_monotone_invariance(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    assert spearman(np.exp(x / 10), y**3) == pytest.approx(spearman(x, y), abs=1e-12)


def _rec(acc, regime, w, car=0.0, v=1.0):
    return {"accession": acc, "regime": regime, "welfare_gap": w, "car": car, "velocity": v}


def test_aggregate_summary_examples():
    records = [_rec("a", "StrategicGap", 0.0004), _rec("b", "StrategicGap", -0.0022)]
    records += [_rec(f"g{i}", "StrategicGap", 0.0) for i in range(8)]
    records += [_rec("s", "SymmetricEquilibrium", 0.5), _rec("u", None, None)]
    verdicts = {r["accession"]: {"decision": "FinalizeReport", "insider_sentiment": 0.0} for r in records}
    verdicts["a"] = {"decision": "ResearchLoop", "insider_sentiment": 1.0}
    verdicts["b"] = {"decision": "ResearchLoop", "insider_sentiment": 0.5}
    s = aggregate_summary(records, verdicts, resilience=1.0)
    assert s.gamma_total == pytest.approx(0.26)
    assert s.audit_precision == pytest.approx(0.2)
    assert s.insider_sentiment_mean == pytest.approx(0.75)
    assert s.regime_census["StrategicGap"]["count"] == 10
    assert s.n_audited == 11 and s.n_unclassified == 1
    assert sum(c["count"] for c in s.regime_census.values()) == s.n_audited
    assert s.regime_census["SemanticFriction"]["mean_car"] is None
