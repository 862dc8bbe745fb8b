"""Event-study returns, welfare gaps, discovery velocity and the interaction regression."""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    DegenerateVariance,
    IncompleteWindow,
    RankDeficient,
    TooFewClusters,
    ZeroShock,
    ZeroVariance,
)
from .temporal import REGIMES

CAR_WINDOW = (1, 10)


def _as_day(event_day) -> np.datetime64:
    if isinstance(event_day, np.datetime64):
        return event_day.astype("datetime64[D]")
    if hasattr(event_day, "date") and callable(event_day.date):
        event_day = event_day.date()
    return np.datetime64(event_day, "D")


def event_window_days(event_day, window=CAR_WINDOW) -> np.ndarray:
    """Business days ``window[0]..window[1]`` after the event.

    A weekend event rolls back to the preceding business day, so the first
    trading day after it is day +1.
    """
    day0 = np.busday_offset(_as_day(event_day), 0, roll="backward")
    return np.busday_offset(day0, np.arange(window[0], window[1] + 1))


def car(returns, event_day, window=CAR_WINDOW) -> float:
    """Cumulative market-adjusted abnormal return over the post-event window."""
    wanted = event_window_days(event_day, window)
    idx = np.searchsorted(returns.dates, wanted)
    idx_ok = idx < len(returns.dates)
    present = np.zeros(len(wanted), dtype=bool)
    present[idx_ok] = returns.dates[idx[idx_ok]] == wanted[idx_ok]
    if not present.all():
        missing = [str(d) for d in wanted[~present]]
        raise IncompleteWindow(f"missing trading days {missing}")
    total = 0.0
    for i in idx:
        total += returns.firm_return[i] - returns.benchmark_return[i]
    return float(total)


def welfare_gap(alpha_star: float, car_value: float) -> float:
    return alpha_star - car_value


def discovery_velocity(car_value: float, alpha_star: float) -> float:
    if alpha_star == 0:
        raise ZeroShock("velocity undefined for a zero fundamental shock")
    return car_value / alpha_star


@dataclass(frozen=True)
class WelfareRecord:
    accession: str
    car: float
    welfare_gap: float
    velocity: Optional[float]

    @classmethod
    def build(cls, accession, alpha_star, car_value):
        try:
            v = discovery_velocity(car_value, alpha_star)
        except ZeroShock:
            v = None
        return cls(accession, car_value, welfare_gap(alpha_star, car_value), v)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------

COEF_NAMES = ("const", "z_comp", "z_phi", "z_comp_x_z_phi")


def _normal_two_sided(t):
    return math.erfc(abs(t) / math.sqrt(2.0)) if np.isfinite(t) else float("nan")


@dataclass(frozen=True)
class RegressionResult:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    n_obs: int
    n_clusters: int
    residuals: np.ndarray = field(repr=False, default=None)

    @property
    def beta0(self):
        return float(self.coef[0])

    @property
    def beta1(self):
        return float(self.coef[1])

    @property
    def beta2(self):
        return float(self.coef[2])

    @property
    def gamma(self):
        return float(self.coef[3])

    def as_dict(self) -> dict:
        def clean(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "n_obs": self.n_obs,
            "n_clusters": self.n_clusters,
            "coefficients": [
                {
                    "name": name,
                    "coef": clean(b),
                    "se": clean(s),
                    "t": clean(t),
                    "p": clean(p),
                }
                for name, b, s, t, p in zip(self.names, self.coef, self.se, self.t_stats, self.p_values)
            ],
        }


def crv1_covariance(X, resid, cluster_ids):
    """One-way cluster-robust covariance with the G/(G-1)*(n-1)/(n-k) factor."""
    n, k = X.shape
    _, codes = np.unique(np.asarray(cluster_ids), return_inverse=True)
    n_groups = int(codes.max()) + 1 if n else 0
    if n_groups < 2:
        raise TooFewClusters(f"need at least 2 clusters, got {n_groups}")
    bread = np.linalg.inv(X.T @ X)
    sums = kernels.cluster_sums(X * resid[:, None], codes, n_groups)
    meat = sums.T @ sums
    scale = n_groups / (n_groups - 1) * (n - 1) / (n - k)
    return scale * bread @ meat @ bread, n_groups


def ols_interaction(welfare, z_comp, z_phi, cluster_ids, controls=None, control_names=None):
    """OLS of welfare on [1, z_comp, z_phi, z_comp*z_phi] with CRV1 errors.

    ``controls`` optionally appends extra regressors (an n-by-m array).
    p-values use the normal approximation.
    """
    y = np.asarray(welfare, dtype=np.float64)
    zc = np.asarray(z_comp, dtype=np.float64)
    zp = np.asarray(z_phi, dtype=np.float64)
    n = y.shape[0]
    if not (zc.shape[0] == zp.shape[0] == len(cluster_ids) == n):
        raise ValueError("inputs differ in length")
    if n < 5:
        raise ValueError(f"need at least 5 observations, got {n}")
    cols = [np.ones(n), zc, zp, zc * zp]
    names = list(COEF_NAMES)
    if controls is not None:
        extra = np.asarray(controls, dtype=np.float64).reshape(n, -1)
        cols.extend(extra.T)
        names.extend(control_names or [f"control_{i}" for i in range(extra.shape[1])])
    X = np.column_stack(cols)
    k = X.shape[1]
    if n <= k or np.linalg.matrix_rank(X) < k:
        raise RankDeficient(f"design matrix of shape {X.shape} is not full column rank")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    cov, n_groups = crv1_covariance(X, resid, cluster_ids)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    p = np.array([_normal_two_sided(v) for v in t])
    return RegressionResult(tuple(names), coef, se, t, p, n, n_groups, resid)


# ---------------------------------------------------------------------------
# tests of association
# ---------------------------------------------------------------------------


def welch_t(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise DegenerateVariance("both samples are constant")
    return float((a.mean() - b.mean()) / math.sqrt(va / a.size + vb / b.size))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors of at least 2 values")
    rx = kernels.midranks(x)
    ry = kernels.midranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("ranks are constant")
    return float(rx @ ry) / math.sqrt(sxx * syy)


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------


@dataclass
class AuditSummary:
    gamma_total: float
    audit_precision: float
    insider_sentiment_mean: float
    resilience: Optional[float]
    regime_census: dict
    n_audited: int
    n_escalated: int
    n_strategic_gap: int
    n_unclassified: int = 0

    def as_dict(self):
        return asdict(self)


def _mean(values):
    values = [v for v in values if v is not None]
    if not values:
        return None
    total = 0.0
    for v in values:
        total += v
    return total / len(values)


def aggregate_summary(records, verdicts, resilience=None) -> AuditSummary:
    """Reduce finalized per-filing records into the audit summary.

    ``records`` are mappings with ``accession``, ``regime`` (or None),
    ``car``, ``welfare_gap`` and ``velocity``; ``verdicts`` maps accession to
    a mapping with ``decision`` and ``insider_sentiment``. Reductions run in
    accession order.
    """
    records = sorted(records, key=lambda r: r["accession"])
    escalated = [r for r in records if verdicts[r["accession"]]["decision"] == "ResearchLoop"]

    gamma = 0.0
    for r in escalated:
        if r.get("welfare_gap") is not None:
            gamma += abs(r["welfare_gap"])
    gamma *= 100.0

    census = {}
    for regime in REGIMES:
        rows = [r for r in records if r.get("regime") == regime.value]
        census[regime.value] = {
            "count": len(rows),
            "mean_car": _mean(r.get("car") for r in rows),
            "mean_velocity": _mean(r.get("velocity") for r in rows),
            "mean_welfare_gap": _mean(r.get("welfare_gap") for r in rows),
        }
    n_gap = census["StrategicGap"]["count"]
    esc_gap = sum(1 for r in escalated if r.get("regime") == "StrategicGap")
    sentiment = _mean(verdicts[r["accession"]]["insider_sentiment"] for r in escalated)
    return AuditSummary(
        gamma_total=gamma,
        audit_precision=esc_gap / n_gap if n_gap else 0.0,
        insider_sentiment_mean=sentiment if sentiment is not None else 0.0,
        resilience=resilience,
        regime_census=census,
        n_audited=sum(c["count"] for c in census.values()),
        n_escalated=len(escalated),
        n_strategic_gap=n_gap,
        n_unclassified=sum(1 for r in records if r.get("regime") is None),
    )
