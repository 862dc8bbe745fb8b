import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disclosure_audit.errors import InsufficientHistory, ZeroVariance
from disclosure_audit.temporal import (
    REGIMES,
    Regime,
    RegimeAssignment,
    classify_regime,
    firm_seed,
    forecast_latency,
    forecast_sigma,
    latency_series,
    moments,
    profile_firm,
    propensity,
    standardize,
)
from conftest import make_filing, utc


def _filings_at(days):
    base = utc(2020, 1, 1)
    from datetime import timedelta

    return [make_filing(1, i + 1, base + timedelta(days=d)) for i, d in enumerate(days)]


def test_latency_series_examples():
    np.testing.assert_array_equal(latency_series(_filings_at([0, 90, 181])), [90.0, 91.0])
    with pytest.raises(InsufficientHistory):
        latency_series(_filings_at([0]))
    np.testing.assert_array_equal(latency_series(_filings_at([5, 5])), [0.0])


def test_forecast_constant_history():
    s = forecast_latency([10, 10, 10], 500, seed=1)
    assert (s == 10).all()
    assert forecast_sigma(s) == 0.0
    assert propensity(s) == 1.0


def test_forecast_determinism():
    a = forecast_latency([30, 90, 45], 1000, seed=7)
    b = forecast_latency([30, 90, 45], 1000, seed=7)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != forecast_latency([30, 90, 45], 1000, seed=8).tobytes()


def _mixture_sd(gaps):
    """Exhaustive (gap, deviation) mixture: every pair equally likely."""
    g = np.asarray(gaps, dtype=float)
    dev = g - g.mean()
    values = (g[:, None] + dev[None, :]).ravel()
    return values.std()


def test_forecast_sigma_matches_mixture_oracle():
    s = forecast_latency([30, 90], 1000, seed=7)
    oracle = _mixture_sd([30, 90])
    assert oracle == pytest.approx(np.sqrt(2 * 900.0))
    assert abs(forecast_sigma(s) - oracle) / oracle < 0.10


def test_forecast_errors():
    with pytest.raises(InsufficientHistory):
        forecast_latency([], 10)
    with pytest.raises(ValueError):
        forecast_latency([1.0, 2.0], 1)


def test_propensity_examples():
    assert propensity([3.0, 3.0]) == 1.0
    assert propensity([0.0, np.sqrt(2.0)]) == pytest.approx(0.5)
    sweep = [propensity([0.0, s]) for s in np.linspace(0.1, 1000, 50)]
    assert all(a > b for a, b in zip(sweep, sweep[1:]))
    assert 0 < sweep[-1] < 0.01


def test_standardize_examples():
    np.testing.assert_allclose(standardize([1, 2, 3]), [-1, 0, 1])
    with pytest.raises(ZeroVariance):
        standardize([4, 4, 4])
    with pytest.raises(ZeroVariance):
        moments([1.0])


@settings(max_examples=100)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30).filter(lambda v: np.ptp(v) > 1e-3))
def test_standardize_unit_moments(values):
    z = standardize(values)
    assert abs(z.mean()) < 1e-9
    assert z.std(ddof=1) == pytest.approx(1.0, rel=1e-9)


def test_classify_regime_examples():
    assert classify_regime(-0.5, 0.5) is Regime.SYMMETRIC_EQUILIBRIUM
    assert classify_regime(1.2, -0.3) is Regime.STRATEGIC_GAP
    assert classify_regime(0.0, 0.0) is Regime.STOCHASTIC_ASYMMETRY
    assert classify_regime(0.1, 0.1) is Regime.SEMANTIC_FRICTION
    with pytest.raises(ValueError):
        classify_regime(float("nan"), 0.0)


@settings(max_examples=200)
@given(st.floats(-1e9, 1e9), st.floats(-1e9, 1e9))
def test_regimes_partition_plane(z, p):
    hits = [
        r
        for r, cond in [
            (Regime.SYMMETRIC_EQUILIBRIUM, z <= 0 and p > 0),
            (Regime.SEMANTIC_FRICTION, z > 0 and p > 0),
            (Regime.STOCHASTIC_ASYMMETRY, z <= 0 and p <= 0),
            (Regime.STRATEGIC_GAP, z > 0 and p <= 0),
        ]
        if cond
    ]
    assert hits == [classify_regime(z, p)]


def test_profile_firm_and_seed():
    filings = _filings_at([0, 91, 182, 273])
    prof = profile_firm(7, filings, 200, seed=3)
    assert prof.phi == 1.0 and prof.sigma_forecast == 0.0
    assert prof.gaps == (91.0, 91.0, 91.0)
    assert firm_seed(3, 7) == [3, 7]
    erratic = profile_firm(7, _filings_at([0, 45, 182, 242]), 200, seed=3)
    assert erratic.phi < 0.1
    assert erratic == profile_firm(7, _filings_at([0, 45, 182, 242]), 200, seed=3)
    assert prof.to_payload()["gaps"] == [91.0, 91.0, 91.0]


def test_regime_assignment():
    a = RegimeAssignment.assign("acc", 0.5, -0.5)
    assert a.regime is Regime.STRATEGIC_GAP
    assert len(REGIMES) == 4
