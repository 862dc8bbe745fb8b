"""Escalation routing, rule-based recursive search and Shapley attribution."""

import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import kernels
from .errors import MissingMoments, TooManyFeatures
from .semantic import Lexicon, score_sentiment, tokenize

MAX_SHAPLEY_FEATURES = 8
SEARCH_PASSES = 3


class Decision(str, Enum):
    RESEARCH_LOOP = "ResearchLoop"
    FINALIZE_REPORT = "FinalizeReport"


class Routing(str, Enum):
    MOMENTS = "moments"  # alpha* below corpus mean - 2 sd
    ROLLING = "rolling"  # alpha* deviation below -2 sd of the firm's rolling window


@dataclass(frozen=True)
class SupervisorConfig:
    theta: float = 1.0
    mu_alpha: Optional[float] = None
    sigma_alpha: Optional[float] = None
    depth_cap: int = 3
    window_days: int = 5
    routing: Routing = Routing.MOMENTS

    def __post_init__(self):
        if self.depth_cap < 1:
            raise ValueError("depth_cap must be >= 1")
        if self.window_days < 0:
            raise ValueError("window_days must be >= 0")
        if self.sigma_alpha is not None and self.sigma_alpha < 0:
            raise ValueError("sigma_alpha must be >= 0")
        object.__setattr__(self, "routing", Routing(self.routing))


@dataclass(frozen=True)
class RouteState:
    alpha_star: float
    divergence_z: float
    alpha_baseline: Optional[float] = None
    alpha_sigma: Optional[float] = None


def route(state: RouteState, cfg: SupervisorConfig) -> Decision:
    """Escalate when the fundamental shock is extreme and |divergence| (z-units) exceeds theta.

    Both inequalities are strict.
    """
    diverged = state.divergence_z > cfg.theta
    if cfg.routing is Routing.MOMENTS:
        if cfg.mu_alpha is None or cfg.sigma_alpha is None:
            raise MissingMoments("corpus moments of alpha* are required")
        shocked = state.alpha_star < cfg.mu_alpha - 2.0 * cfg.sigma_alpha
    else:
        if state.alpha_baseline is None or state.alpha_sigma is None:
            return Decision.FINALIZE_REPORT
        shocked = state.alpha_star - state.alpha_baseline < -2.0 * state.alpha_sigma
    return Decision.RESEARCH_LOOP if shocked and diverged else Decision.FINALIZE_REPORT


# ---------------------------------------------------------------------------
# recursive search
# ---------------------------------------------------------------------------

_TXN_LINE = re.compile(r"^\s*([A-Z])\s+(\d+(?:\.\d+)?)\s*$")


def form4_net_shares(body_text: str) -> Optional[float]:
    """Net shares acquired (P) minus disposed (S) from ``CODE SHARES`` lines.

    Returns None when the body has no S/P transaction lines.
    """
    net, seen = 0.0, False
    for line in body_text.splitlines():
        m = _TXN_LINE.match(line)
        if m is None or m.group(1) not in ("S", "P"):
            continue
        seen = True
        shares = float(m.group(2))
        net += shares if m.group(1) == "P" else -shares
    return net if seen else None


@dataclass(frozen=True)
class InsiderEvent:
    accession: str
    day_offset: int
    net_shares: float

    @property
    def is_net_sell(self):
        return self.net_shares < 0


def _day_offset(when, event) -> int:
    return (when.date() - event.filing_time.date()).days


def insider_window_events(firm, event, window_days: int) -> list:
    """Form 4 transactions dated within ``window_days`` of the event's filing date."""
    out = []
    for f in firm.filings:
        if f.form_type != "FORM4":
            continue
        net = form4_net_shares(f.body_text)
        if net is None:
            continue
        offset = _day_offset(f.transaction_time or f.filing_time, event)
        if abs(offset) <= window_days:
            out.append(InsiderEvent(f.accession.canonical, offset, net))
    return sorted(out, key=lambda e: e.accession)


@dataclass(frozen=True)
class Finding:
    trigger_kind: str  # insider-liquidation | covenant-keyword | late-8K
    evidence: str
    day_offset: int


@dataclass(frozen=True)
class AuditVerdict:
    accession: str
    decision: Decision
    findings: tuple = ()
    insider_sentiment: float = 0.0
    depth_used: int = 0

    def __post_init__(self):
        if self.findings and self.decision is not Decision.RESEARCH_LOOP:
            raise ValueError("findings require a ResearchLoop decision")

    def to_payload(self) -> dict:
        return {
            "accession": self.accession,
            "decision": self.decision.value,
            "findings": [asdict(f) for f in self.findings],
            "insider_sentiment": self.insider_sentiment,
            "depth_used": self.depth_used,
        }

    @classmethod
    def from_payload(cls, p):
        return cls(
            p["accession"],
            Decision(p["decision"]),
            tuple(Finding(**f) for f in p["findings"]),
            p["insider_sentiment"],
            p["depth_used"],
        )


def recursive_search(firm, event, cfg: SupervisorConfig, lexicon: Lexicon, covenant_terms=frozenset()):
    """Run up to ``depth_cap`` scan passes, stopping at the first pass with findings.

    1. Form 4 net sells within the insider window.
    2. 8-K bodies filed within the window that contain covenant keywords.
    3. 8-Ks filed after the event with negative dictionary polarity.

    Returns ``(findings, depth_used)``.
    """
    event_day = event.filing_time.date()
    eight_ks = sorted(
        (f for f in firm.filings if f.form_type == "8-K" and f.accession != event.accession),
        key=lambda f: f.accession.canonical,
    )
    covenant_terms = frozenset(covenant_terms)

    def pass_insider():
        return [
            Finding("insider-liquidation", e.accession, e.day_offset)
            for e in insider_window_events(firm, event, cfg.window_days)
            if e.is_net_sell
        ]

    def pass_covenant():
        hits = []
        for f in eight_ks:
            off = _day_offset(f.filing_time, event)
            if abs(off) <= cfg.window_days and covenant_terms.intersection(tokenize(f.body_text)):
                hits.append(Finding("covenant-keyword", f.accession.canonical, off))
        return hits

    def pass_late_8k():
        hits = []
        for f in eight_ks:
            if f.filing_time.date() > event_day and score_sentiment(f.body_text, lexicon)[0] == -1:
                hits.append(Finding("late-8K", f.accession.canonical, _day_offset(f.filing_time, event)))
        return hits

    passes = (pass_insider, pass_covenant, pass_late_8k)
    depth = 0
    for scan in passes[: min(cfg.depth_cap, SEARCH_PASSES)]:
        depth += 1
        findings = scan()
        if findings:
            return tuple(findings), depth
    return (), depth


def insider_sentiment(window_events) -> float:
    """Share of insider events in the window that are net sells (0 when there are none)."""
    events = list(window_events)
    if not events:
        return 0.0
    return sum(1 for e in events if e.is_net_sell) / len(events)


def audit_event(firm, event, state: RouteState, cfg: SupervisorConfig, lexicon, covenant_terms) -> AuditVerdict:
    decision = route(state, cfg)
    acc = event.accession.canonical
    if decision is Decision.FINALIZE_REPORT:
        return AuditVerdict(acc, decision)
    findings, depth = recursive_search(firm, event, cfg, lexicon, covenant_terms)
    sentiment = insider_sentiment(insider_window_events(firm, event, cfg.window_days))
    return AuditVerdict(acc, decision, findings, sentiment, depth)


# ---------------------------------------------------------------------------
# Shapley attribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShapleyReport:
    features: tuple
    values: np.ndarray
    interactions: np.ndarray = field(repr=False)
    baseline_value: float = 0.0
    output: float = 0.0

    def interaction(self, a, b) -> float:
        i, j = self.features.index(a), self.features.index(b)
        return float(self.interactions[i, j])


def coalition_inputs(x, baseline) -> np.ndarray:
    """All 2**d inputs where row ``mask`` takes x on set bits and baseline elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    d = x.shape[0]
    masks = np.arange(1 << d)
    on = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    return np.where(on, x, baseline)


def shapley_interaction(model, x, baseline, features=None) -> ShapleyReport:
    """Exact Shapley values and pairwise interaction values by coalition enumeration.

    ``model`` maps an (m, d) array of inputs to m outputs. Features absent
    from a coalition take their ``baseline`` value.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    if d > MAX_SHAPLEY_FEATURES:
        raise TooManyFeatures(f"{d} features; exact enumeration supports at most {MAX_SHAPLEY_FEATURES}")
    features = tuple(features) if features is not None else tuple(f"x{i}" for i in range(d))
    values = np.asarray(model(coalition_inputs(x, baseline)), dtype=np.float64).reshape(-1)
    phi, inter = kernels.shapley_from_values(values, d)
    return ShapleyReport(features, phi, inter, float(values[0]), float(values[-1]))


def conditional_effect(report: ShapleyReport, feature, conditioner) -> float:
    """Main effect of ``feature`` plus its full pairwise interaction with ``conditioner``."""
    return report.interaction(feature, feature) + 2.0 * report.interaction(feature, conditioner)


def interaction_multiplier(model, X, baseline, features, feature, conditioner, low_mask) -> float:
    """Ratio of the slope of ``feature``'s conditional effect in the low group to the rest.

    Slopes are least-squares fits through the origin of the conditional
    effect on ``x[feature] - baseline[feature]``.
    """
    X = np.asarray(X, dtype=np.float64)
    low_mask = np.asarray(low_mask, dtype=bool)
    i = list(features).index(feature)
    effects = np.array(
        [conditional_effect(shapley_interaction(model, row, baseline, features), feature, conditioner) for row in X]
    )
    dx = X[:, i] - np.asarray(baseline, dtype=np.float64)[i]

    def slope(mask):
        den = float(dx[mask] @ dx[mask])
        return float(dx[mask] @ effects[mask]) / den

    return slope(low_mask) / slope(~low_mask)
