"""Checkpointed audit pipeline.

Every audited (10-K / 10-Q) filing moves through the stages

    Ingested -> ScoredA -> ScoredB -> Evaluated -> Routed -> Finalized

and each completed stage is appended to the journal before any later stage
reads it. Between ScoredB and Evaluated sits a global barrier, journaled once
under accession ``*``, that fixes the corpus moments used for z-scores and
routing. Stage outputs are always read back from the journal's committed
payloads, so a resumed run and an uninterrupted run consume identical values.
"""

import graphlib
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import PipelineConfig
from .econometrics import (
    WelfareRecord,
    aggregate_summary,
    car,
    ols_interaction,
    spearman,
    welch_t,
)
from .errors import (
    AuditError,
    CyclicGraph,
    IncompleteWindow,
    InsufficientHistory,
    SimulatedCrash,
    ZeroVariance,
)
from .ingest import format_timestamp
from .journal import Journal
from .semantic import Lexicon, make_scorer, packaged_terms, read_terms, score_firm
from .supervisor import Decision, RouteState, SupervisorConfig, audit_event
from .temporal import RegimeAssignment, moments, profile_firm

STAGES = ("Ingested", "ScoredA", "ScoredB", "Evaluated", "Routed", "Finalized")
BARRIER_STAGE = "Standardized"
GLOBAL_KEY = "*"
REPORT_FORMAT = "disclosure-audit-report/1"

# node name -> (journal stage, upstream nodes); order follows the lifecycle table
DEFAULT_NODES = {
    "ingest": ("Ingested", ()),
    "score_a": ("ScoredA", ("ingest",)),
    "score_b": ("ScoredB", ("score_a",)),
    "standardize": (BARRIER_STAGE, ("score_b",)),
    "evaluate": ("Evaluated", ("standardize",)),
    "route": ("Routed", ("evaluate",)),
    "finalize": ("Finalized", ("route",)),
}
PROCESSING_NODES = ("score_a", "score_b", "evaluate", "route", "finalize")


@dataclass(frozen=True)
class PipelineGraph:
    nodes: dict
    order: tuple

    @property
    def stages(self) -> tuple:
        """Per-filing processing stages in execution order (source and barrier excluded)."""
        return tuple(n for n in self.order if n in PROCESSING_NODES)


def build_graph(config: Optional[PipelineConfig] = None, extra_edges=()) -> PipelineGraph:
    """Assemble the stage graph and fix its topological order.

    ``extra_edges`` adds ``(node, dependency)`` pairs; a cycle raises CyclicGraph.
    """
    deps = {name: set(up) for name, (_, up) in DEFAULT_NODES.items()}
    for node, dep in extra_edges:
        deps.setdefault(node, set()).add(dep)
        deps.setdefault(dep, set())
    sorter = graphlib.TopologicalSorter(deps)
    try:
        order = tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        raise CyclicGraph(f"stage graph has a cycle: {exc.args[1]}") from exc
    return PipelineGraph({k: tuple(sorted(v)) for k, v in deps.items()}, order)


@dataclass
class AuditState:
    accession: str
    stage: Optional[str] = None
    payload: dict = field(default_factory=dict)

    def advance(self, stage, data):
        current = STAGES.index(self.stage) if self.stage else -1
        if STAGES.index(stage) != current + 1:
            raise ValueError(f"{self.accession}: cannot move from {self.stage} to {stage}")
        self.stage = stage
        self.payload[stage] = data


@dataclass
class AuditRun:
    report: dict
    report_bytes: bytes
    digest: str
    summary: object
    states: dict
    entries_appended: int


class _Context:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.lexicon = Lexicon.load(config.positive_lexicon, config.negative_lexicon, config.complexity_lexicon)
        hedging = read_terms(config.hedging_lexicon) if config.hedging_lexicon else None
        self.scorer = make_scorer(config.scorer, self.lexicon, hedging)
        self.covenant = (
            read_terms(config.covenant_keywords) if config.covenant_keywords else packaged_terms("covenant")
        )

    def map(self, fn, items):
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


def _safe_moments(values):
    try:
        return list(moments(values))
    except ZeroVariance:
        values = list(values)
        return [float(np.mean(values)) if values else None, None]


def _z(value, mom):
    mean, sd = mom
    if value is None:
        return None
    if sd is None:
        return 0.0
    return (value - mean) / sd


class _Pipeline:
    def __init__(self, graph, firms, journal: Journal, ctx: _Context):
        self.graph = graph
        self.firms = [f for f in firms if f.periodic]
        self.journal = journal
        self.ctx = ctx
        self.states = {}
        for firm in self.firms:
            for f in firm.periodic:
                self.states[f.accession.canonical] = AuditState(f.accession.canonical)

    # -- helpers ---------------------------------------------------------
    def commit(self, accession, stage, payload=None):
        """Append ``payload`` unless the stage is already committed; return the committed payload."""
        existing = self.journal.get(accession, stage)
        if existing is None:
            if payload is None:
                raise AuditError(f"nothing to commit for {stage} of {accession}")
            self.journal.append(accession, stage, payload)
            existing = self.journal.get(accession, stage)
        if accession != GLOBAL_KEY:
            self.states[accession].advance(stage, existing)
        return existing

    def payload(self, accession, stage):
        return self.journal.get(accession, stage)

    def per_firm(self, stage, compute):
        """Compute missing firm payloads (possibly in parallel) and commit them in corpus order."""
        pending = [
            firm
            for firm in self.firms
            if any(self.payload(f.accession.canonical, stage) is None for f in firm.periodic)
        ]
        results = dict(zip((id(f) for f in pending), self.ctx.map(compute, pending)))
        for firm in self.firms:
            computed = results.get(id(firm))
            for i, f in enumerate(firm.periodic):
                acc = f.accession.canonical
                if self.payload(acc, stage) is None:
                    self.commit(acc, stage, computed[i])
                else:
                    self.commit(acc, stage)

    # -- stages ----------------------------------------------------------
    def ingest(self):
        for firm in self.firms:
            for f in firm.periodic:
                self.commit(
                    f.accession.canonical,
                    "Ingested",
                    {
                        "issuer": f.issuer.id,
                        "form_type": f.form_type,
                        "filing_time": format_timestamp(f.filing_time),
                        "file_size": f.file_size,
                    },
                )

    def score_a(self):
        cfg = self.ctx.config

        def compute(firm):
            recs = score_firm(firm.periodic, self.ctx.lexicon, self.ctx.scorer, cfg.omega)
            return [r.to_payload() for r in recs]

        self.per_firm("ScoredA", compute)

    def score_b(self):
        cfg = self.ctx.config

        def compute(firm):
            try:
                prof = profile_firm(firm.issuer.id, firm.periodic, cfg.n_samples, cfg.seed)
                row = {"phi": prof.phi, "sigma_forecast": prof.sigma_forecast, "n_gaps": len(prof.gaps)}
            except InsufficientHistory:
                row = {"phi": None, "sigma_forecast": None, "n_gaps": 0}
            return [dict(row) for _ in firm.periodic]

        self.per_firm("ScoredB", compute)

    def standardize(self):
        existing = self.payload(GLOBAL_KEY, BARRIER_STAGE)
        if existing is not None:
            self.moments = existing
            return
        accs = sorted(self.states)
        a = [self.payload(acc, "ScoredA") for acc in accs]
        b = [self.payload(acc, "ScoredB") for acc in accs]
        payload = {
            "n": len(accs),
            "complexity": _safe_moments([r["complexity_raw"] for r in a]),
            "phi": _safe_moments([r["phi"] for r in b if r["phi"] is not None]),
            "abs_divergence": _safe_moments([abs(r["divergence"]) for r in a]),
            "alpha": _safe_moments([r["alpha_star"] for r in a]),
        }
        self.moments = self.commit(GLOBAL_KEY, BARRIER_STAGE, payload)

    def evaluate(self):
        mom = self.moments
        for firm in self.firms:
            for f in firm.periodic:
                acc = f.accession.canonical
                if self.payload(acc, "Evaluated") is not None:
                    self.commit(acc, "Evaluated")
                    continue
                a = self.payload(acc, "ScoredA")
                b = self.payload(acc, "ScoredB")
                z_comp = _z(a["complexity_raw"], mom["complexity"])
                z_phi = _z(b["phi"], mom["phi"]) if b["phi"] is not None else None
                regime = None
                if z_phi is not None:
                    regime = RegimeAssignment.assign(acc, z_comp, z_phi).regime.value
                car_value = welfare = velocity = None
                if firm.returns is not None:
                    try:
                        car_value = car(firm.returns, f.filing_time)
                    except IncompleteWindow:
                        pass
                if car_value is not None:
                    w = WelfareRecord.build(acc, a["alpha_star"], car_value)
                    welfare, velocity = w.welfare_gap, w.velocity
                self.commit(
                    acc,
                    "Evaluated",
                    {
                        "z_comp": z_comp,
                        "z_phi": z_phi,
                        "regime": regime,
                        "divergence_z": _z(abs(a["divergence"]), mom["abs_divergence"]),
                        "car": car_value,
                        "welfare_gap": welfare,
                        "velocity": velocity,
                    },
                )

    def route(self):
        cfg = self.ctx.config
        mu, sd = self.moments["alpha"]
        sup = SupervisorConfig(
            theta=cfg.theta,
            mu_alpha=mu,
            sigma_alpha=sd if sd is not None else 0.0,
            depth_cap=cfg.depth_cap,
            window_days=cfg.window_days,
            routing=cfg.routing,
        )
        for firm in self.firms:
            for f in firm.periodic:
                acc = f.accession.canonical
                if self.payload(acc, "Routed") is not None:
                    self.commit(acc, "Routed")
                    continue
                a = self.payload(acc, "ScoredA")
                e = self.payload(acc, "Evaluated")
                state = RouteState(a["alpha_star"], e["divergence_z"], a["alpha_baseline"], a["alpha_sigma"])
                verdict = audit_event(firm, f, state, sup, self.ctx.lexicon, self.ctx.covenant)
                self.commit(acc, "Routed", verdict.to_payload())

    def finalize(self):
        for firm in self.firms:
            for f in firm.periodic:
                acc = f.accession.canonical
                if self.payload(acc, "Finalized") is not None:
                    self.commit(acc, "Finalized")
                    continue
                ing = self.payload(acc, "Ingested")
                a = self.payload(acc, "ScoredA")
                b = self.payload(acc, "ScoredB")
                e = self.payload(acc, "Evaluated")
                r = self.payload(acc, "Routed")
                record = {"accession": acc, **ing}
                record.update({k: v for k, v in a.items() if k != "accession"})
                record.update({"phi": b["phi"], "sigma_forecast": b["sigma_forecast"]})
                record.update(e)
                record.update({k: v for k, v in r.items() if k != "accession"})
                self.commit(acc, "Finalized", record)

    def execute(self):
        for node in self.graph.order:
            step = getattr(self, node, None)
            if step is None:
                raise AuditError(f"no executor for stage node {node!r}")
            step()


def regression_block(rows, with_size=False):
    rows = [r for r in rows if r["welfare_gap"] is not None and r["z_phi"] is not None]
    try:
        controls = None
        names = None
        if with_size:
            controls = np.array([[math.log1p(r["file_size"])] for r in rows]).reshape(len(rows), 1)
            names = ["log_file_size"]
        res = ols_interaction(
            [r["welfare_gap"] for r in rows],
            [r["z_comp"] for r in rows],
            [r["z_phi"] for r in rows],
            [r["issuer"] for r in rows],
            controls=controls,
            control_names=names,
        )
        return res.as_dict()
    except (AuditError, ValueError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}", "n_obs": len(rows)}


def _diagnostics(rows):
    out = {}
    shocked = [r["divergence"] for r in rows if r["shock_flag"] == 1]
    routine = [r["divergence"] for r in rows if r["shock_flag"] == 0]
    try:
        out["divergence_welch_t"] = welch_t(shocked, routine)
    except (AuditError, ValueError) as exc:
        out["divergence_welch_t"] = None
        out["divergence_welch_t_error"] = f"{type(exc).__name__}: {exc}"
    try:
        out["complexity_sentiment_spearman"] = spearman(
            [r["complexity_raw"] for r in rows], [r["cms"] for r in rows]
        )
    except (AuditError, ValueError) as exc:
        out["complexity_sentiment_spearman"] = None
        out["complexity_sentiment_spearman_error"] = f"{type(exc).__name__}: {exc}"
    out["shock_count"] = len(shocked)
    out["shock_rate"] = len(shocked) / len(rows) if rows else 0.0
    return out


REPORT_CONFIG_KEYS = ("omega", "n_samples", "seed", "theta", "depth_cap", "window_days", "scorer", "routing")


def build_report(records, moments_payload, config: PipelineConfig, resilience=None) -> dict:
    rows = sorted(records, key=lambda r: r["accession"])
    verdicts = {r["accession"]: r for r in rows}
    summary = aggregate_summary(rows, verdicts, resilience)
    return {
        "format": REPORT_FORMAT,
        "config": {k: getattr(config, k) for k in REPORT_CONFIG_KEYS},
        "moments": moments_payload,
        "summary": summary.as_dict(),
        "regression": regression_block(rows),
        "regression_with_size": regression_block(rows, with_size=True),
        "diagnostics": _diagnostics(rows),
        "escalations": [
            {k: r[k] for k in ("accession", "issuer", "regime", "alpha_star", "divergence", "welfare_gap",
                               "findings", "insider_sentiment", "depth_used")}
            for r in rows
            if r["decision"] == Decision.RESEARCH_LOOP.value
        ],
        "filings": rows,
    }, summary


def encode_report(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n").encode(
        "utf-8"
    )


def report_digest(report_bytes: bytes) -> str:
    return hashlib.sha256(report_bytes).hexdigest()


def run(graph, corpus, journal_path, config: Optional[PipelineConfig] = None, kill_after_seq=None,
        torn_tail=False) -> AuditRun:
    """Run (or resume) the audit over ``corpus`` using the journal at ``journal_path``.

    Work already committed to the journal is reused, never recomputed into a
    new entry. ``kill_after_seq`` / ``torn_tail`` are crash-injection hooks.
    """
    config = config or PipelineConfig()
    ctx = _Context(config)
    with Journal(journal_path, fsync=config.fsync, kill_after_seq=kill_after_seq, torn_tail=torn_tail) as journal:
        pipe = _Pipeline(graph, corpus, journal, ctx)
        pipe.execute()
        records = [journal.get(acc, "Finalized") for acc in sorted(pipe.states)]
        report, summary = build_report(records, pipe.moments, config)
        appended = journal.appended
    data = encode_report(report)
    return AuditRun(report, data, report_digest(data), summary, pipe.states, appended)


def resilience_metric(trials) -> float:
    """Fraction of interrupted runs whose resumed report matched the baseline."""
    trials = [bool(t) for t in trials]
    if not trials:
        raise ValueError("resilience needs at least one trial")
    return sum(trials) / len(trials)


@dataclass(frozen=True)
class CrashTrial:
    kill_after_seq: int
    torn_tail: bool
    recovered: bool
    digest: Optional[str]
    cause: Optional[str] = None


def crash_trial(graph, corpus, journal_path, config, kill_after_seq, baseline_digest, torn_tail=False) -> CrashTrial:
    """Kill a fresh run after ``kill_after_seq`` entries, resume it, and compare report digests."""
    try:
        run(graph, corpus, journal_path, config, kill_after_seq=kill_after_seq, torn_tail=torn_tail)
        cause = "run finished before the kill point"
    except SimulatedCrash:
        cause = None
    try:
        resumed = run(graph, corpus, journal_path, config)
    except AuditError as exc:
        return CrashTrial(kill_after_seq, torn_tail, False, None, f"resume failed: {exc}")
    ok = resumed.digest == baseline_digest
    if not ok:
        cause = cause or "report digest differs from baseline"
    return CrashTrial(kill_after_seq, torn_tail, ok, resumed.digest, cause if not ok else None)
