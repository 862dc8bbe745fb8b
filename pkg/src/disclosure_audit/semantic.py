"""Filing text scoring: polarity, materiality score, shock flags, divergence.

The default scorer is dictionary based. Any callable ``text -> (P, C)`` can
stand in as the contextual scorer; strategy divergence is the contextual
score minus the dictionary score.
"""

import math
import re
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateSigma, SchemaViolation

BASELINE_WINDOW = 4
DEFAULT_OMEGA = -0.1

_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> list:
    """Lower-case, split on non-alphanumerics, drop tokens shorter than two characters."""
    return [t for t in _SPLIT.split(text.lower()) if len(t) >= 2]


def read_terms(path) -> frozenset:
    """One term per line; blank lines and ``#`` comments are ignored."""
    text = Path(path).read_text(encoding="utf-8")
    return frozenset(
        t.strip().lower() for t in text.splitlines() if t.strip() and not t.lstrip().startswith("#")
    )


def packaged_terms(name: str) -> frozenset:
    text = resources.files("disclosure_audit").joinpath("data", f"{name}.txt").read_text("utf-8")
    return frozenset(t.strip().lower() for t in text.splitlines() if t.strip())


@dataclass(frozen=True)
class Lexicon:
    positive: frozenset
    negative: frozenset
    complexity: frozenset

    def __post_init__(self):
        sets = {"positive": self.positive, "negative": self.negative, "complexity": self.complexity}
        for name, terms in sets.items():
            bad = [t for t in terms if t != t.lower() or not t or any(c.isspace() for c in t)]
            if bad:
                raise SchemaViolation(f"{name} lexicon has malformed terms: {sorted(bad)[:5]}")
        names = list(sets)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                common = sets[a] & sets[b]
                if common:
                    raise SchemaViolation(f"{a} and {b} lexicons overlap: {sorted(common)[:5]}")

    @classmethod
    def load(cls, positive=None, negative=None, complexity=None):
        """Load term files; any path left as None uses the packaged list."""
        return cls(
            read_terms(positive) if positive else packaged_terms("positive"),
            read_terms(negative) if negative else packaged_terms("negative"),
            read_terms(complexity) if complexity else packaged_terms("complexity"),
        )


def _polarity_confidence(pos: int, neg: int):
    if pos == neg:
        polarity = 0
    else:
        polarity = 1 if pos > neg else -1
    total = pos + neg
    confidence = abs(pos - neg) / total if total else 0.0
    return polarity, confidence


def score_sentiment(body_text: str, lexicon: Lexicon):
    """Dictionary scores of one document.

    Returns ``(P, C, intensity, complexity_raw)`` where P is the sign of
    positive minus negative hits, C the hit margin ``|pos-neg|/(pos+neg)``,
    intensity the negative-term density and complexity_raw the
    complexity-term density.
    """
    tokens = tokenize(body_text)
    n = len(tokens)
    pos = neg = cpx = 0
    for t in tokens:
        if t in lexicon.positive:
            pos += 1
        elif t in lexicon.negative:
            neg += 1
        elif t in lexicon.complexity:
            cpx += 1
    polarity, confidence = _polarity_confidence(pos, neg)
    intensity = neg / n if n else 0.0
    complexity_raw = cpx / n if n else 0.0
    return polarity, confidence, intensity, complexity_raw


class LexiconScorer:
    """Contextual-scorer interface backed by the dictionary itself (divergence is always 0)."""

    name = "lexicon"

    def __init__(self, lexicon: Lexicon):
        self.lexicon = lexicon

    def __call__(self, text: str):
        p, c, _, _ = score_sentiment(text, self.lexicon)
        return p, c


class PerturbedLexiconScorer:
    """Dictionary scorer that also reads hedging terms as negative.

    Exists so that divergence is non-trivial in tests and on synthetic
    corpora: boilerplate that hedges heavily looks neutral to the plain
    dictionary but negative here.
    """

    name = "perturbed"

    def __init__(self, lexicon: Lexicon, hedging: Optional[frozenset] = None):
        self.lexicon = lexicon
        self.hedging = frozenset(hedging) if hedging is not None else packaged_terms("uncertainty")
        overlap = self.hedging & (lexicon.positive | lexicon.negative)
        if overlap:
            raise SchemaViolation(f"hedging terms overlap polarity lexicons: {sorted(overlap)[:5]}")

    def __call__(self, text: str):
        pos = neg = 0
        for t in tokenize(text):
            if t in self.lexicon.positive:
                pos += 1
            elif t in self.lexicon.negative or t in self.hedging:
                neg += 1
        return _polarity_confidence(pos, neg)


SCORERS = {"lexicon": LexiconScorer, "perturbed": PerturbedLexiconScorer}


def make_scorer(name: str, lexicon: Lexicon, hedging=None) -> Callable:
    if name == "lexicon":
        return LexiconScorer(lexicon)
    if name == "perturbed":
        return PerturbedLexiconScorer(lexicon, hedging)
    raise ValueError(f"unknown scorer {name!r}; choose from {sorted(SCORERS)}")


def compute_cms(polarity: int, confidence: float) -> float:
    return float(polarity * confidence)


def rolling_baseline(history: Sequence[float]):
    """Mean and sample sd of the last four values, or ``(None, None)`` with fewer than four."""
    if len(history) < BASELINE_WINDOW:
        return None, None
    window = [float(x) for x in history[-BASELINE_WINDOW:]]
    # same accumulation order as kernels.rolling_prior_stats
    s = 0.0
    for x in window:
        s += x
    mean = s / BASELINE_WINDOW
    ss = 0.0
    for x in window:
        ss += (x - mean) * (x - mean)
    return mean, math.sqrt(ss / (BASELINE_WINDOW - 1))


def flag_shock(cms: float, baseline: float, sigma: float):
    """Return ``(delta, flag)``; flag is 1 for a negative deviation beyond two sigma.

    Raises DegenerateSigma for a negative deviation against a zero-variance
    baseline, where the strict test would flag any downward wiggle.
    """
    if baseline is None or sigma is None:
        raise ValueError("baseline and sigma are required")
    delta = cms - baseline
    if sigma == 0.0 and delta < 0:
        raise DegenerateSigma(f"zero baseline sigma with negative deviation {delta!r}")
    flag = int(abs(delta) > 2.0 * sigma and delta < 0)
    return delta, flag


def strategy_divergence(contextual_cms: float, lexical_cms: float) -> float:
    return contextual_cms - lexical_cms


def fundamental_shock(intensity: float, omega: float = DEFAULT_OMEGA) -> float:
    if not omega < 0:
        raise ValueError("omega must be negative")
    return intensity * omega


@dataclass(frozen=True)
class MaterialityRecord:
    accession: str
    polarity: int
    confidence: float
    cms: float
    lexical_cms: float
    divergence: float
    intensity: float
    complexity_raw: float
    alpha_star: float
    baseline: Optional[float] = None
    rolling_sigma: Optional[float] = None
    shock_delta: Optional[float] = None
    shock_flag: int = 0
    degenerate_sigma: bool = False
    # rolling moments of alpha_star over the prior window (alternate routing rule)
    alpha_baseline: Optional[float] = None
    alpha_sigma: Optional[float] = None

    def to_payload(self) -> dict:
        return asdict(self)

    @classmethod
    def from_payload(cls, payload: dict) -> "MaterialityRecord":
        return cls(**payload)


def _opt(x):
    return None if np.isnan(x) else float(x)


def score_firm(filings, lexicon: Lexicon, scorer: Optional[Callable] = None, omega: float = DEFAULT_OMEGA):
    """Score a firm's periodic filings in time order.

    Shock flags use the four filings immediately preceding each filing.
    """
    scorer = scorer or LexiconScorer(lexicon)
    rows = []
    for f in filings:
        lp, lc, intensity, cpx = score_sentiment(f.body_text, lexicon)
        cp, cc = scorer(f.body_text)
        rows.append((f.accession.canonical, cp, cc, compute_cms(lp, lc), intensity, cpx))

    cms = np.array([compute_cms(r[1], r[2]) for r in rows])
    alphas = np.array([fundamental_shock(r[4], omega) for r in rows])
    means, sds = kernels.rolling_prior_stats(cms, BASELINE_WINDOW)
    a_means, a_sds = kernels.rolling_prior_stats(alphas, BASELINE_WINDOW)

    out = []
    for t, (acc, cp, cc, lex_m, intensity, cpx) in enumerate(rows):
        m = float(cms[t])
        base, sigma = _opt(means[t]), _opt(sds[t])
        delta, flag, degenerate = None, 0, False
        if base is not None:
            try:
                delta, flag = flag_shock(m, base, sigma)
            except DegenerateSigma:
                delta, degenerate = m - base, True
        out.append(
            MaterialityRecord(
                accession=acc,
                polarity=int(cp),
                confidence=float(cc),
                cms=m,
                lexical_cms=lex_m,
                divergence=strategy_divergence(m, lex_m),
                intensity=float(intensity),
                complexity_raw=float(cpx),
                alpha_star=float(alphas[t]),
                baseline=base,
                rolling_sigma=sigma,
                shock_delta=delta,
                shock_flag=flag,
                degenerate_sigma=degenerate,
                alpha_baseline=_opt(a_means[t]),
                alpha_sigma=_opt(a_sds[t]),
            )
        )
    return out
