import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disclosure_audit import kernels
from conftest import BACKENDS

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, DISCLOSURE_AUDIT_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from disclosure_audit import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_rolling_prior_stats_matches_direct(backend):
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 3.0])
    means, sds = kernels.rolling_prior_stats(x, 4)
    assert np.isnan(means[:4]).all() and np.isnan(sds[:4]).all()
    assert means[4] == pytest.approx(np.mean(x[0:4]), abs=1e-15)
    assert sds[4] == pytest.approx(np.std(x[0:4], ddof=1), abs=1e-15)
    assert means[5] == pytest.approx(np.mean(x[1:5]), abs=1e-15)
    assert sds[5] == pytest.approx(np.std(x[1:5], ddof=1), abs=1e-14)


def test_rolling_prior_stats_short_series(backend):
    means, sds = kernels.rolling_prior_stats(np.arange(3.0), 4)
    assert means.shape == (3,) and np.isnan(means).all()


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=0, max_size=40))
def test_rolling_backends_bit_identical(values):
    x = np.array(values, dtype=np.float64)
    if not kernels.NUMBA_AVAILABLE:
        return
    a = kernels.rolling_prior_stats_numba(x, 4)
    b = kernels.rolling_prior_stats_numpy(x, 4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_crc64_check_value(backend):
    assert kernels.crc64(b"123456789") == 0x995DC9BBDF1939FA
    assert kernels.crc64(b"") == 0


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=300))
def test_crc64_backends_agree(data):
    ref = kernels.crc64_numpy(data)
    if kernels.NUMBA_AVAILABLE:
        assert int(kernels.crc64_numba(np.frombuffer(data, dtype=np.uint8), kernels.CRC64_TABLE)) == ref


def test_crc64_detects_single_bit_flip():
    data = bytearray(b'{"payload": 1}')
    base = kernels.crc64(bytes(data))
    data[3] ^= 0x01
    assert kernels.crc64(bytes(data)) != base


def _coalition_values(f, d):
    return np.array([f([(m >> i) & 1 for i in range(d)]) for m in range(1 << d)], dtype=float)


def test_shapley_product_and_additive(backend):
    # f = 2*x0 + x1*x2 over indicator inputs
    vals = _coalition_values(lambda z: 2 * z[0] + z[1] * z[2], 3)
    phi, inter = kernels.shapley_from_values(vals, 3)
    np.testing.assert_allclose(phi, [2.0, 0.5, 0.5], atol=1e-12)
    assert inter[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert inter[1, 2] == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(inter, inter.T, atol=1e-15)
    assert inter.sum() == pytest.approx(vals[-1] - vals[0], abs=1e-12)
    np.testing.assert_allclose(inter.sum(axis=1), phi, atol=1e-12)


def test_shapley_rejects_wrong_length():
    with pytest.raises(ValueError):
        kernels.shapley_from_values(np.zeros(5), 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6).flatmap(lambda d: st.tuples(st.just(d), st.lists(finite, min_size=1 << d, max_size=1 << d))))
def test_shapley_backends_agree(args):
    d, values = args
    v = np.array(values)
    w1, w2 = kernels._shapley_weights(d)
    p_np, i_np = kernels.shapley_from_values_numpy(v, d, w1, w2)
    assert p_np.sum() == pytest.approx(v[-1] - v[0], abs=1e-9 * (1 + np.abs(v).max()))
    if kernels.NUMBA_AVAILABLE:
        p_nb, i_nb = kernels.shapley_from_values_numba(v, d, w1, w2)
        np.testing.assert_allclose(p_nb, p_np, atol=1e-9, rtol=1e-12)
        np.testing.assert_allclose(i_nb, i_np, atol=1e-9, rtol=1e-12)


def test_cluster_sums(backend):
    scores = np.arange(12.0).reshape(6, 2)
    codes = np.array([0, 1, 0, 2, 1, 0])
    out = kernels.cluster_sums(scores, codes, 3)
    np.testing.assert_array_equal(out, [[0 + 4 + 10, 1 + 5 + 11], [2 + 8, 3 + 9], [6, 7]])


def test_midranks_ties(backend):
    x = np.array([10.0, 20.0, 20.0, 5.0, 20.0, 7.0])
    np.testing.assert_array_equal(kernels.midranks(x), [3.0, 5.0, 5.0, 1.0, 5.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=50))
def test_midranks_sum_and_backends(values):
    x = np.array(values, dtype=float)
    r = kernels.midranks_numpy(x)
    n = x.size
    assert r.sum() == pytest.approx(n * (n + 1) / 2)
    if kernels.NUMBA_AVAILABLE:
        np.testing.assert_array_equal(kernels.midranks_numba(x), r)


def test_backend_list_nonempty():
    assert "numpy" in BACKENDS
