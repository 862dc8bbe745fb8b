"""Filing-cadence audit: latency gaps, bootstrap forecasts, propensity and regimes."""

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import InsufficientHistory, ZeroVariance

SECONDS_PER_DAY = 86400.0


class Regime(str, Enum):
    SYMMETRIC_EQUILIBRIUM = "SymmetricEquilibrium"
    SEMANTIC_FRICTION = "SemanticFriction"
    STOCHASTIC_ASYMMETRY = "StochasticAsymmetry"
    STRATEGIC_GAP = "StrategicGap"


REGIMES = tuple(Regime)


def latency_series(filings) -> np.ndarray:
    """Gaps in fractional days between consecutive filing times."""
    times = [f.filing_time for f in filings]
    if len(times) < 2:
        raise InsufficientHistory(f"need at least 2 filings, got {len(times)}")
    return np.array(
        [(b - a).total_seconds() / SECONDS_PER_DAY for a, b in zip(times[:-1], times[1:])]
    )


def forecast_latency(gaps, n_samples: int = 1000, seed=0) -> np.ndarray:
    """Draw ``n_samples`` next-gap forecasts by bootstrap with empirical jitter.

    Each draw is a uniformly resampled historical gap plus a uniformly
    resampled deviation of the history from its mean, so the draws follow the
    equal-weight mixture over all (gap, deviation) pairs. ``seed`` is anything
    :func:`numpy.random.default_rng` accepts.
    """
    g = np.asarray(gaps, dtype=np.float64)
    if g.size == 0:
        raise InsufficientHistory("no gaps to forecast from")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if np.all(g == g[0]):
        dev = np.zeros_like(g)
    else:
        dev = g - g.mean()
    rng = np.random.default_rng(seed)
    i = rng.integers(0, g.size, n_samples)
    j = rng.integers(0, g.size, n_samples)
    return g[i] + dev[j]


def forecast_sigma(samples) -> float:
    s = np.asarray(samples, dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least 2 samples")
    if np.all(s == s[0]):
        return 0.0
    return float(np.std(s, ddof=1))


def propensity(samples) -> float:
    """Predictability of the next filing: ``1 / (1 + sd(samples))``."""
    return 1.0 / (1.0 + forecast_sigma(samples))


def moments(values):
    """Mean and sample sd; raises ZeroVariance when the sd is zero or undefined."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ZeroVariance(f"need at least 2 values, got {v.size}")
    mean = float(v.mean())
    sd = float(v.std(ddof=1))
    if sd == 0.0 or np.all(v == v[0]):
        raise ZeroVariance("values are constant")
    return mean, sd


def standardize(values) -> np.ndarray:
    mean, sd = moments(values)
    return (np.asarray(values, dtype=np.float64) - mean) / sd


def classify_regime(z_comp: float, z_phi: float) -> Regime:
    """Quadrant rule; zero goes to the low side on both axes."""
    if not (np.isfinite(z_comp) and np.isfinite(z_phi)):
        raise ValueError("regime inputs must be finite")
    high_comp = z_comp > 0
    high_phi = z_phi > 0
    if high_phi:
        return Regime.SEMANTIC_FRICTION if high_comp else Regime.SYMMETRIC_EQUILIBRIUM
    return Regime.STRATEGIC_GAP if high_comp else Regime.STOCHASTIC_ASYMMETRY


@dataclass(frozen=True)
class LatencyProfile:
    issuer: int
    gaps: tuple
    sigma_forecast: float
    phi: float
    n_samples: int

    def to_payload(self) -> dict:
        d = asdict(self)
        d["gaps"] = list(self.gaps)
        return d


def firm_seed(seed: int, cik: int):
    """Per-firm RNG seed, independent of processing order and worker count."""
    return [int(seed), int(cik)]


def profile_firm(issuer: int, periodic_filings, n_samples: int = 1000, seed: int = 0) -> LatencyProfile:
    gaps = latency_series(periodic_filings)
    samples = forecast_latency(gaps, n_samples, firm_seed(seed, issuer))
    sigma = forecast_sigma(samples)
    return LatencyProfile(issuer, tuple(float(g) for g in gaps), sigma, 1.0 / (1.0 + sigma), n_samples)


@dataclass(frozen=True)
class RegimeAssignment:
    accession: str
    z_comp: float
    z_phi: float
    regime: Regime

    @classmethod
    def assign(cls, accession, z_comp, z_phi):
        return cls(accession, float(z_comp), float(z_phi), classify_regime(z_comp, z_phi))
