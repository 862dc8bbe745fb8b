"""Deterministic synthetic corpus with planted regimes, shocks, insider trades and returns.

Every firm is assigned a regime, which fixes two traits:

* complexity-term density of its periodic filings (low or high), and
* filing cadence: regular 91-day gaps (high propensity) or an erratic
  rotating cycle (low propensity).

Shocked quarters carry a burst of negative terms. "Camouflaged" shocks wrap
the burst in positive and hedging language, which is what produces a large
strategy divergence under the perturbed scorer and makes them escalate.
Returns are built backward from a target velocity, so that
``CAR = V_target * alpha* + noise`` for every periodic filing.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, IoFailure
from .ingest import Cik, CikKind, Filing, ReturnSeries, group_firms, parse_accession
from .semantic import packaged_terms, tokenize
from .temporal import REGIMES, Regime

DEFAULT_VELOCITIES = {
    Regime.SYMMETRIC_EQUILIBRIUM.value: 3.07,
    Regime.SEMANTIC_FRICTION.value: 3.83,
    Regime.STOCHASTIC_ASYMMETRY.value: 3.65,
    Regime.STRATEGIC_GAP.value: 1.23,
}

HIGH_COMPLEXITY = frozenset({Regime.SEMANTIC_FRICTION.value, Regime.STRATEGIC_GAP.value})
HIGH_PROPENSITY = frozenset({Regime.SYMMETRIC_EQUILIBRIUM.value, Regime.SEMANTIC_FRICTION.value})

REGULAR_GAP = 91
ERRATIC_CYCLE = (45, 137, 60, 122)
FILING_HOUR = 21
START = date(2012, 1, 2)
CAR_DAYS = 10
BASELINE_QUARTERS = 4
INSIDER_WINDOW = 5

# words outside every packaged list; used to pad bodies to a fixed length
FILLER = (
    "company", "period", "quarter", "fiscal", "segment", "operations", "statement",
    "product", "customer", "market", "region", "management", "discussion", "analysis",
    "results", "table", "note", "section", "report", "year", "business", "sales",
    "service", "office", "facility", "employee", "board", "shareholder", "system", "plan",
)

_BODY_COUNTS = {
    # (positive, negative, hedging) hits; routine adds t mod 4 positive hits
    "routine": (6, 2, 1),
    "camouflaged": (12, 14, 20),
    "plain": (2, 14, 1),
}
_COMPLEXITY_COUNTS = (1, 6)  # low, high


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int = 0
    n_firms: int = 200
    quarters_per_firm: int = 12
    regime_mix: tuple = (0.25, 0.25, 0.25, 0.25)  # in REGIMES order
    shock_rate: float = 0.1
    insider_plant_rate: float = 0.87
    camouflage_rate: float = 0.5
    velocity_by_regime: dict = field(default_factory=lambda: dict(DEFAULT_VELOCITIES))
    noise_level: float = 1.0
    tokens_per_filing: int = 400
    market_coverage: float = 1.0

    def __post_init__(self):
        if self.n_firms < 1:
            raise InvalidSpec("n_firms must be >= 1")
        if self.quarters_per_firm < 2:
            raise InvalidSpec("quarters_per_firm must be >= 2")
        mix = tuple(float(x) for x in self.regime_mix)
        if len(mix) != len(REGIMES) or any(x < 0 for x in mix):
            raise InvalidSpec("regime_mix needs four non-negative fractions")
        if not math.isclose(sum(mix), 1.0, abs_tol=1e-9):
            raise InvalidSpec(f"regime_mix sums to {sum(mix)}, not 1")
        object.__setattr__(self, "regime_mix", mix)
        for name in ("shock_rate", "insider_plant_rate", "camouflage_rate", "market_coverage"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1], got {value}")
        if self.noise_level < 0:
            raise InvalidSpec("noise_level must be >= 0")
        vel = {Regime(k).value: float(v) for k, v in dict(self.velocity_by_regime).items()}
        if set(vel) != {r.value for r in REGIMES}:
            raise InvalidSpec("velocity_by_regime needs a value for each regime")
        object.__setattr__(self, "velocity_by_regime", vel)
        need = max(sum(c) + 3 for c in _BODY_COUNTS.values()) + max(_COMPLEXITY_COUNTS)
        if self.tokens_per_filing < need:
            raise InvalidSpec(f"tokens_per_filing must be >= {need}")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Label:
    accession: str
    issuer: int
    regime: str
    shock: int
    planted_insider: int
    camouflaged: int


@dataclass
class SyntheticCorpus:
    filings: list
    returns: list  # (date, cik, firm_return, benchmark_return)
    labels: list
    master: dict

    def label_map(self):
        return {lab.accession: lab for lab in self.labels}


def allocate(n: int, fractions) -> list:
    """Largest-remainder split of ``n`` items; ties go to the earlier entry."""
    raw = [n * f for f in fractions]
    counts = [int(math.floor(x)) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _check_filler():
    used = set()
    for name in ("positive", "negative", "complexity", "uncertainty", "covenant"):
        used |= packaged_terms(name)
    bad = [w for w in FILLER if w in used or tokenize(w) != [w]]
    if bad:
        raise InvalidSpec(f"filler words collide with lexicons: {bad}")


class _Words:
    def __init__(self):
        self.positive = sorted(packaged_terms("positive"))
        self.negative = sorted(packaged_terms("negative"))
        self.complexity = sorted(packaged_terms("complexity"))
        self.hedging = sorted(packaged_terms("uncertainty"))
        self.covenant = sorted(packaged_terms("covenant"))


def _body(rng, words: _Words, n_tokens, pos, neg, hedge, cpx) -> str:
    parts = (
        list(rng.choice(words.positive, pos))
        + list(rng.choice(words.negative, neg))
        + list(rng.choice(words.hedging, hedge))
        + list(rng.choice(words.complexity, cpx))
    )
    parts += list(rng.choice(FILLER, n_tokens - len(parts)))
    rng.shuffle(parts)
    return " ".join(str(p) for p in parts)


def _at(day: date) -> datetime:
    return datetime.combine(day, time(FILING_HOUR), tzinfo=timezone.utc)


class _Accessions:
    def __init__(self):
        self.counters = {}

    def next(self, filer: int, day: date) -> str:
        key = (filer, day.year % 100)
        self.counters[key] = self.counters.get(key, 0) + 1
        return f"{filer:010d}-{key[1]:02d}-{self.counters[key]:06d}"


def _pick_shocks(rng, n_quarters, rate) -> list:
    """Shock quarters: need a full prior window and no shock inside it."""
    shocks = []
    for t in range(BASELINE_QUARTERS, n_quarters):
        if shocks and t - shocks[-1] <= BASELINE_QUARTERS:
            continue
        if rng.random() < rate:
            shocks.append(t)
    return shocks


def build(spec: GeneratorSpec) -> SyntheticCorpus:
    """Generate the corpus in memory. Same spec, same output."""
    _check_filler()
    rng = np.random.default_rng(spec.seed)
    words = _Words()
    acc = _Accessions()

    counts = allocate(spec.n_firms, spec.regime_mix)
    regimes = [r.value for r, c in zip(REGIMES, counts) for _ in range(c)]
    regimes = [regimes[i] for i in rng.permutation(len(regimes))]
    covered = rng.random(spec.n_firms) < spec.market_coverage if spec.market_coverage < 1 else np.ones(
        spec.n_firms, dtype=bool
    )
    jitter = int(round(2 * spec.noise_level))

    firms = []
    for i, regime in enumerate(regimes):
        cik = 1_000_001 + i
        start = START + timedelta(days=int(rng.integers(0, 30)))
        if regime in HIGH_PROPENSITY:
            gaps = [REGULAR_GAP + (int(rng.integers(-jitter, jitter + 1)) if jitter else 0)
                    for _ in range(spec.quarters_per_firm - 1)]
        else:
            k = i % len(ERRATIC_CYCLE)
            cycle = ERRATIC_CYCLE[k:] + ERRATIC_CYCLE[:k]
            gaps = [cycle[t % len(cycle)] for t in range(spec.quarters_per_firm - 1)]
        days = [start]
        for g in gaps:
            days.append(days[-1] + timedelta(days=g))
        shocks = _pick_shocks(rng, spec.quarters_per_firm, spec.shock_rate)
        camo = {t for t in shocks if rng.random() < spec.camouflage_rate}
        firms.append({"cik": cik, "regime": regime, "days": days, "shocks": set(shocks), "camo": camo,
                      "covered": bool(covered[i])})

    # insider plants among camouflaged (escalation-worthy) shocks
    worthy = [(fi, t) for fi, firm in enumerate(firms) for t in sorted(firm["camo"])]
    n_plant = math.ceil(spec.insider_plant_rate * len(worthy) - 1e-9)
    planted = {worthy[j] for j in rng.permutation(len(worthy))[:n_plant]}

    filings, labels, master = [], [], {}
    abnormal = {}  # cik -> list of (event day, alpha*, velocity)
    next_owner = 9_000_001
    for fi, firm in enumerate(firms):
        cik = firm["cik"]
        name = f"SYNTHETIC FIRM {fi:04d} INC"
        master[cik] = name
        cpx = _COMPLEXITY_COUNTS[firm["regime"] in HIGH_COMPLEXITY]
        owner = next_owner
        next_owner += 1
        owner_name = f"INSIDER {fi:04d}"
        master[owner] = owner_name
        events = []
        for t, day in enumerate(firm["days"]):
            if t in firm["camo"]:
                kind = "camouflaged"
            elif t in firm["shocks"]:
                kind = "plain"
            else:
                kind = "routine"
            pos, neg, hedge = _BODY_COUNTS[kind]
            if kind == "routine":
                pos += t % 4
            body = _body(rng, words, spec.tokens_per_filing, pos, neg, hedge, cpx)
            form = "10-K" if t % 4 == 3 else "10-Q"
            a = acc.next(cik, day)
            filings.append(_filing(a, cik, name, form, _at(day), body))
            is_planted = (fi, t) in planted
            labels.append(Label(a, cik, firm["regime"], int(t in firm["shocks"]), int(is_planted),
                                int(t in firm["camo"])))
            alpha = -0.1 * neg / spec.tokens_per_filing
            events.append((day, alpha, spec.velocity_by_regime[firm["regime"]]))

            if is_planted:
                tx = day + timedelta(days=int(rng.integers(-3, 4)))
                filings.append(_form4(acc, owner, owner_name, cik, name, tx, f"S {int(rng.integers(1, 50)) * 100}"))
            elif kind == "camouflaged":
                eight_k = day + timedelta(days=2)
                body = _body(rng, words, 60, 0, 0, 0, 0) + " " + str(rng.choice(words.covenant))
                filings.append(_filing(acc.next(cik, eight_k), cik, name, "8-K", _at(eight_k), body))
            # decoy sale well outside any event window
            if rng.random() < 0.3:
                tx = day + timedelta(days=int(rng.integers(10, 31)))
                filings.append(_form4(acc, owner, owner_name, cik, name, tx, f"S {int(rng.integers(1, 50)) * 100}"))
            # occasional purchase inside the window
            if rng.random() < 0.2:
                tx = day + timedelta(days=int(rng.integers(-INSIDER_WINDOW, INSIDER_WINDOW + 1)))
                filings.append(_form4(acc, owner, owner_name, cik, name, tx, f"P {int(rng.integers(1, 20)) * 100}"))
            # neutral current report
            if rng.random() < 0.2:
                d8 = day + timedelta(days=int(rng.integers(7, 30)))
                body = _body(rng, words, 80, 2, 0, 0, 0)
                filings.append(_filing(acc.next(cik, d8), cik, name, "8-K", _at(d8), body))
        if firm["covered"]:
            abnormal[cik] = events

    returns = _returns(rng, spec, abnormal)
    filings.sort(key=lambda f: f.sort_key)
    labels.sort(key=lambda lab: lab.accession)
    return SyntheticCorpus(filings, returns, labels, master)


def _filing(accession, cik, name, form, when, body) -> Filing:
    return Filing(
        accession=parse_accession(accession),
        issuer=Cik(cik, name, CikKind.ISSUER),
        form_type=form,
        filing_time=when,
        body_text=body,
        file_size=len(body.encode("utf-8")) + 512,
    )


def _form4(acc, owner, owner_name, cik, name, tx_day, body) -> Filing:
    filed = tx_day + timedelta(days=2)
    return Filing(
        accession=parse_accession(acc.next(owner, filed)),
        issuer=Cik(cik, name, CikKind.ISSUER),
        form_type="FORM4",
        filing_time=_at(filed),
        body_text=body,
        file_size=len(body) + 256,
        transaction_time=datetime.combine(tx_day, time(12), tzinfo=timezone.utc),
        owner=Cik(owner, owner_name, CikKind.INDIVIDUAL),
    )


def _returns(rng, spec, abnormal) -> list:
    if not abnormal:
        return []
    first = min(ev[0][0] for ev in abnormal.values()) - timedelta(days=7)
    last = max(ev[-1][0] for ev in abnormal.values()) + timedelta(days=30)
    days = np.arange(np.datetime64(first, "D"), np.datetime64(last, "D"))
    days = days[np.is_busday(days)]
    bench = rng.normal(0.0003, 0.01, days.size)
    noise_sd = spec.noise_level * 1e-4
    rows = []
    for cik in sorted(abnormal):
        extra = np.zeros(days.size)
        for day, alpha, velocity in abnormal[cik]:
            day0 = np.busday_offset(np.datetime64(day, "D"), 0, roll="backward")
            window = np.busday_offset(day0, np.arange(1, CAR_DAYS + 1))
            idx = np.searchsorted(days, window)
            extra[idx] += velocity * alpha / CAR_DAYS
        noise = rng.normal(0.0, noise_sd, days.size) if noise_sd > 0 else np.zeros(days.size)
        firm = bench + extra + noise
        rows.extend((str(d), cik, float(fr), float(br)) for d, fr, br in zip(days, firm, bench))
    return rows


def write(corpus: SyntheticCorpus, out_dir) -> dict:
    """Write filings.jsonl, returns.csv, labels.csv and master.csv; return their paths."""
    out = Path(out_dir)
    paths = {
        "filings": out / "filings.jsonl",
        "returns": out / "returns.csv",
        "labels": out / "labels.csv",
        "master": out / "master.csv",
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(paths["filings"], "w", encoding="utf-8") as fh:
            for f in corpus.filings:
                fh.write(json.dumps(f.to_record(), sort_keys=True) + "\n")
        with open(paths["returns"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "cik", "firm_return", "benchmark_return"])
            w.writerows((d, c, repr(fr), repr(br)) for d, c, fr, br in corpus.returns)
        with open(paths["labels"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["accession", "issuer", "regime", "shock", "planted_insider", "camouflaged"])
            w.writerows(
                (lab.accession, lab.issuer, lab.regime, lab.shock, lab.planted_insider, lab.camouflaged)
                for lab in corpus.labels
            )
        with open(paths["master"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cik", "name"])
            w.writerows(sorted(corpus.master.items()))
    except OSError as exc:
        raise IoFailure(f"cannot write synthetic corpus to {out}: {exc}") from exc
    return {k: str(v) for k, v in paths.items()}


def generate(spec: GeneratorSpec, out_dir) -> dict:
    return write(build(spec), out_dir)


def read_labels(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        return {
            row["accession"]: Label(
                row["accession"], int(row["issuer"]), row["regime"], int(row["shock"]),
                int(row["planted_insider"]), int(row["camouflaged"]),
            )
            for row in csv.DictReader(fh)
        }


def to_firms(corpus: SyntheticCorpus):
    """Group an in-memory corpus into firm histories with returns attached."""
    by_cik = {}
    for d, cik, fr, br in corpus.returns:
        by_cik.setdefault(cik, []).append((d, fr, br))
    series = {
        cik: ReturnSeries(
            np.array([r[0] for r in rows], dtype="datetime64[D]"),
            np.array([r[1] for r in rows]),
            np.array([r[2] for r in rows]),
        )
        for cik, rows in by_cik.items()
    }
    return group_firms(corpus.filings, series)
