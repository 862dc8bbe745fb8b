"""Hot numeric kernels with a numba path and a pure-numpy path.

Every kernel exists twice: ``<name>_numba`` (explicit loops, compiled with
``numba.njit`` when numba is importable) and ``<name>_numpy`` (vectorized).
The public ``<name>`` dispatches on :data:`BACKEND`, which is ``"numba"``
unless numba is missing or ``DISCLOSURE_AUDIT_NO_NUMBA`` is set to a truthy
value before import.

Both paths accumulate in the same order wherever the result feeds a
journaled payload, so reports are identical whichever backend produced them.
"""

import os

import numpy as np

_FLAG = "DISCLOSURE_AUDIT_NO_NUMBA"


def _numba_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _numba_disabled():
        raise ImportError(f"{_FLAG} is set")
    import numba

    NUMBA_AVAILABLE = True
except ImportError:
    numba = None
    NUMBA_AVAILABLE = False

BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"


def _jit(func):
    if NUMBA_AVAILABLE:
        return numba.njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# rolling window mean / sample standard deviation over *prior* values
# ---------------------------------------------------------------------------


@_jit
def rolling_prior_stats_numba(values, window):
    n = values.shape[0]
    means = np.full(n, np.nan)
    sds = np.full(n, np.nan)
    for t in range(window, n):
        s = 0.0
        for j in range(t - window, t):
            s += values[j]
        m = s / window
        ss = 0.0
        for j in range(t - window, t):
            d = values[j] - m
            ss += d * d
        means[t] = m
        sds[t] = np.sqrt(ss / (window - 1))
    return means, sds


def rolling_prior_stats_numpy(values, window):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    means = np.full(n, np.nan)
    sds = np.full(n, np.nan)
    if n <= window:
        return means, sds
    # row r holds values[r : r + window]; it is the prior window of t = r + window
    win = np.lib.stride_tricks.sliding_window_view(values, window)[: n - window]
    # column-by-column accumulation keeps the summation order of the loop kernel
    s = np.zeros(win.shape[0])
    for j in range(window):
        s = s + win[:, j]
    m = s / window
    ss = np.zeros(win.shape[0])
    for j in range(window):
        d = win[:, j] - m
        ss = ss + d * d
    means[window:] = m
    sds[window:] = np.sqrt(ss / (window - 1))
    return means, sds


def rolling_prior_stats(values, window=4):
    """Mean and sample sd of the ``window`` values strictly before each index.

    Entries with fewer than ``window`` predecessors are NaN.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if window < 2:
        raise ValueError("window must be >= 2")
    if BACKEND == "numba":
        return rolling_prior_stats_numba(values, window)
    return rolling_prior_stats_numpy(values, window)


# ---------------------------------------------------------------------------
# CRC-64/XZ
# ---------------------------------------------------------------------------

_CRC64_POLY = 0xC96C5795D7870F42


def _make_crc64_table():
    table = np.zeros(256, dtype=np.uint64)
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table[i] = crc
    return table


CRC64_TABLE = _make_crc64_table()
_CRC64_TABLE_PY = [int(x) for x in CRC64_TABLE]


@_jit
def crc64_numba(data, table):
    crc = np.uint64(0xFFFFFFFFFFFFFFFF)
    mask = np.uint64(0xFF)
    eight = np.uint64(8)
    for b in data:
        crc = table[(crc ^ np.uint64(b)) & mask] ^ (crc >> eight)
    return crc ^ np.uint64(0xFFFFFFFFFFFFFFFF)


def crc64_numpy(data):
    # byte-serial by nature; the fallback keeps to Python ints over the table
    table = _CRC64_TABLE_PY
    crc = 0xFFFFFFFFFFFFFFFF
    for b in data:
        crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def crc64(data: bytes) -> int:
    """CRC-64/XZ of ``data`` (check value for b"123456789" is 0x995DC9BBDF1939FA)."""
    if BACKEND == "numba":
        arr = np.frombuffer(data, dtype=np.uint8)
        return int(crc64_numba(arr, CRC64_TABLE))
    return crc64_numpy(data)


# ---------------------------------------------------------------------------
# Shapley values and pairwise interaction values from coalition values
# ---------------------------------------------------------------------------


def _shapley_weights(d):
    from math import factorial

    # w1[s]: Shapley weight of a coalition of size s not containing i
    w1 = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])
    # w2[s]: interaction weight of a coalition of size s containing neither i nor j
    if d >= 2:
        w2 = np.array(
            [factorial(s) * factorial(d - s - 2) / (2.0 * factorial(d - 1)) for s in range(d - 1)]
        )
    else:
        w2 = np.zeros(1)
    return w1, w2


@_jit
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@_jit
def shapley_from_values_numba(values, d, w1, w2):
    n_masks = values.shape[0]
    phi = np.zeros(d)
    inter = np.zeros((d, d))
    for mask in range(n_masks):
        size = _popcount(mask)
        for i in range(d):
            bi = 1 << i
            if mask & bi:
                continue
            phi[i] += w1[size] * (values[mask | bi] - values[mask])
            for j in range(i + 1, d):
                bj = 1 << j
                if mask & bj:
                    continue
                delta = values[mask | bi | bj] - values[mask | bi] - values[mask | bj] + values[mask]
                inter[i, j] += w2[size] * delta
    for i in range(d):
        for j in range(i + 1, d):
            inter[j, i] = inter[i, j]
    for i in range(d):
        off = 0.0
        for j in range(d):
            if j != i:
                off += inter[i, j]
        inter[i, i] = phi[i] - off
    return phi, inter


def shapley_from_values_numpy(values, d, w1, w2):
    values = np.asarray(values, dtype=np.float64)
    masks = np.arange(values.shape[0])
    sizes = np.array([bin(m).count("1") for m in masks])
    phi = np.zeros(d)
    inter = np.zeros((d, d))
    for i in range(d):
        bi = 1 << i
        sel = masks[(masks & bi) == 0]
        phi[i] = np.sum(w1[sizes[sel]] * (values[sel | bi] - values[sel]))
        for j in range(i + 1, d):
            bj = 1 << j
            sel2 = sel[(sel & bj) == 0]
            delta = values[sel2 | bi | bj] - values[sel2 | bi] - values[sel2 | bj] + values[sel2]
            inter[i, j] = inter[j, i] = np.sum(w2[sizes[sel2]] * delta)
    off = inter.sum(axis=1) - np.diag(inter)
    inter[np.diag_indices(d)] = phi - off
    return phi, inter


def shapley_from_values(values, d):
    """Exact Shapley values and the symmetric interaction matrix.

    ``values[mask]`` is the payoff of the coalition whose members are the set
    bits of ``mask``. The diagonal of the matrix holds main effects, so the
    whole matrix sums to ``values[-1] - values[0]``.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape[0] != 1 << d:
        raise ValueError("values must have 2**d entries")
    w1, w2 = _shapley_weights(d)
    if BACKEND == "numba":
        return shapley_from_values_numba(values, d, w1, w2)
    return shapley_from_values_numpy(values, d, w1, w2)


# ---------------------------------------------------------------------------
# per-cluster score sums for the sandwich meat
# ---------------------------------------------------------------------------


@_jit
def cluster_sums_numba(scores, codes, n_groups):
    n, k = scores.shape
    out = np.zeros((n_groups, k))
    for r in range(n):
        g = codes[r]
        for c in range(k):
            out[g, c] += scores[r, c]
    return out


def cluster_sums_numpy(scores, codes, n_groups):
    out = np.zeros((n_groups, scores.shape[1]))
    np.add.at(out, codes, scores)
    return out


def cluster_sums(scores, codes, n_groups):
    """Row sums of ``scores`` grouped by integer ``codes`` in ``[0, n_groups)``."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if BACKEND == "numba":
        return cluster_sums_numba(scores, codes, n_groups)
    return cluster_sums_numpy(scores, codes, n_groups)


# ---------------------------------------------------------------------------
# average (mid) ranks
# ---------------------------------------------------------------------------


@_jit
def midranks_numba(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = r
        i = j + 1
    return ranks


def midranks_numpy(x):
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    return ((starts + ends) / 2.0)[inverse]


def midranks(x):
    """1-based ranks with ties replaced by their average rank."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if BACKEND == "numba":
        return midranks_numba(x)
    return midranks_numpy(x)
