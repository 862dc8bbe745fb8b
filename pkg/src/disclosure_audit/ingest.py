"""Filing records: parsing, CIK reconciliation, corpus loading and partitioned storage.

Input filings are JSON objects, one per line::

    {"accession": "0000320193-24-000012", "issuer_cik": 320193,
     "issuer_name": "APPLE INC", "form_type": "10-Q",
     "transaction_time": null, "filing_time": "2024-05-03T21:00:00Z",
     "body_text": "...", "file_size": 18234}

``owner_cik`` / ``owner_name`` are optional and describe the reporting owner
of a Form 4. When ``owner_cik`` is absent the owner is taken from the filer
CIK embedded in the accession number, provided it differs from the issuer.
"""

import csv
import gzip
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import IoFailure, MalformedAccession, SchemaViolation

FORM_TYPES = ("10-K", "10-Q", "8-K", "FORM4")
PERIODIC_FORMS = ("10-K", "10-Q")

# first match wins; every listed token marks an institution
INSTITUTION_TOKENS = (
    "CORP",
    "CORPORATION",
    "INC",
    "INCORPORATED",
    "LLC",
    "LP",
    "TRUST",
    "FUND",
    "FUNDS",
)

_ACCESSION_DASHED = re.compile(r"^(\d{10})-(\d{2})-(\d{6})$")
_ACCESSION_PLAIN = re.compile(r"^(\d{10})(\d{2})(\d{6})$")


@dataclass(frozen=True, order=True)
class AccessionNumber:
    filer_cik: int
    year: int
    sequence: int

    def __post_init__(self):
        if not 0 < self.filer_cik < 10**10:
            raise MalformedAccession(f"filer CIK out of range: {self.filer_cik}")
        if not 0 <= self.year < 100 or not 0 <= self.sequence < 10**6:
            raise MalformedAccession(f"year/sequence out of range: {self.year}/{self.sequence}")

    @property
    def canonical(self) -> str:
        return f"{self.filer_cik:010d}-{self.year:02d}-{self.sequence:06d}"

    def __str__(self):
        return self.canonical


def parse_accession(raw: str) -> AccessionNumber:
    """Parse ``DDDDDDDDDD-YY-NNNNNN`` or its 18-digit dashless form."""
    if not isinstance(raw, str):
        raise MalformedAccession(f"accession must be a string, got {type(raw).__name__}")
    text = raw.strip()
    m = _ACCESSION_DASHED.match(text) or _ACCESSION_PLAIN.match(text)
    if m is None:
        raise MalformedAccession(f"not an accession number: {raw!r}")
    return AccessionNumber(int(m.group(1)), int(m.group(2)), int(m.group(3)))


def format_accession(acc: AccessionNumber) -> str:
    return acc.canonical


class CikKind(str, Enum):
    ISSUER = "issuer"
    INDIVIDUAL = "insider-individual"
    INSTITUTION = "insider-institution"


@dataclass(frozen=True)
class Cik:
    id: int
    display_name: str = ""
    kind: CikKind = CikKind.ISSUER

    def __post_init__(self):
        if not 0 < self.id < 10**10:
            raise SchemaViolation(f"CIK out of range: {self.id}")


def normalize_name(name: str) -> str:
    return " ".join(str(name).split())


def classify_entity(name: str, tokens: Iterable[str] = INSTITUTION_TOKENS) -> CikKind:
    """Institution when any name token is in ``tokens``, else individual."""
    words = set(re.split(r"[^A-Z0-9&]+", name.upper().replace(".", "")))
    for token in tokens:
        if token.upper() in words:
            return CikKind.INSTITUTION
    return CikKind.INDIVIDUAL


def parse_timestamp(value) -> datetime:
    if isinstance(value, datetime):
        ts = value
    else:
        text = str(value).strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class Filing:
    accession: AccessionNumber
    issuer: Cik
    form_type: str
    filing_time: datetime
    body_text: str = ""
    file_size: int = 0
    transaction_time: Optional[datetime] = None
    owner: Optional[Cik] = None

    def __post_init__(self):
        if self.form_type not in FORM_TYPES:
            raise SchemaViolation(f"unknown form_type {self.form_type!r}")
        if self.transaction_time is not None and self.filing_time < self.transaction_time:
            raise SchemaViolation(f"{self.accession}: filing_time precedes transaction_time")
        if not self.body_text and self.form_type != "FORM4":
            raise SchemaViolation(f"{self.accession}: empty body_text for {self.form_type}")
        if self.file_size < 0:
            raise SchemaViolation(f"{self.accession}: negative file_size")

    @property
    def latency_delta(self) -> Optional[float]:
        """Filing minus transaction time in fractional days."""
        if self.transaction_time is None:
            return None
        return (self.filing_time - self.transaction_time).total_seconds() / 86400.0

    @property
    def is_periodic(self) -> bool:
        return self.form_type in PERIODIC_FORMS

    @property
    def sort_key(self):
        return (self.issuer.id, self.filing_time, self.accession.canonical)

    def to_record(self) -> dict:
        rec = {
            "accession": self.accession.canonical,
            "issuer_cik": self.issuer.id,
            "issuer_name": self.issuer.display_name,
            "form_type": self.form_type,
            "transaction_time": (
                format_timestamp(self.transaction_time) if self.transaction_time else None
            ),
            "filing_time": format_timestamp(self.filing_time),
            "body_text": self.body_text,
            "file_size": self.file_size,
        }
        if self.owner is not None:
            rec["owner_cik"] = self.owner.id
            rec["owner_name"] = self.owner.display_name
            rec["owner_kind"] = self.owner.kind.value
        if self.issuer.kind is not CikKind.ISSUER:
            rec["issuer_kind"] = self.issuer.kind.value
        return rec


_REQUIRED = ("accession", "issuer_cik", "form_type", "filing_time")


def filing_from_record(rec: dict, line: Optional[int] = None) -> Filing:
    if not isinstance(rec, dict):
        raise SchemaViolation("record is not an object", line)
    for name in _REQUIRED:
        if rec.get(name) in (None, ""):
            raise SchemaViolation(f"missing required field {name!r}", line)
    try:
        acc = parse_accession(rec["accession"])
        issuer = Cik(
            int(rec["issuer_cik"]),
            normalize_name(rec.get("issuer_name") or ""),
            CikKind(rec.get("issuer_kind", CikKind.ISSUER.value)),
        )
        owner = None
        owner_id = rec.get("owner_cik")
        if owner_id is None and rec["form_type"] == "FORM4" and acc.filer_cik != issuer.id:
            owner_id = acc.filer_cik
        if owner_id is not None:
            owner_name = normalize_name(rec.get("owner_name") or "")
            kind = rec.get("owner_kind")
            owner = Cik(
                int(owner_id),
                owner_name,
                CikKind(kind) if kind else classify_entity(owner_name),
            )
        tx = rec.get("transaction_time")
        return Filing(
            accession=acc,
            issuer=issuer,
            form_type=rec["form_type"],
            filing_time=parse_timestamp(rec["filing_time"]),
            body_text=rec.get("body_text") or "",
            file_size=int(rec.get("file_size") or 0),
            transaction_time=parse_timestamp(tx) if tx not in (None, "") else None,
            owner=owner,
        )
    except SchemaViolation as exc:
        if line is not None and exc.line is None:
            raise SchemaViolation(str(exc), line) from exc
        raise
    except (MalformedAccession, ValueError, TypeError) as exc:
        raise SchemaViolation(str(exc), line) from exc


@dataclass(frozen=True)
class ReturnSeries:
    dates: np.ndarray  # datetime64[D]
    firm_return: np.ndarray
    benchmark_return: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        if len(self.firm_return) != n or len(self.benchmark_return) != n:
            raise SchemaViolation("return columns differ in length")
        if n > 1 and not np.all(np.diff(self.dates.astype("int64")) > 0):
            raise SchemaViolation("return dates not strictly increasing")


@dataclass
class FirmHistory:
    issuer: Cik
    filings: list = field(default_factory=list)
    returns: Optional[ReturnSeries] = None

    def __post_init__(self):
        seen = set()
        prev = None
        for f in self.filings:
            if f.accession in seen:
                raise SchemaViolation(f"duplicate accession {f.accession}")
            seen.add(f.accession)
            if prev is not None and f.filing_time < prev:
                raise SchemaViolation(f"filings out of order at {f.accession}")
            prev = f.filing_time

    @property
    def periodic(self) -> list:
        return [f for f in self.filings if f.is_periodic]

    def __len__(self):
        return len(self.filings)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _committed_accessions(checkpoint) -> set:
    if checkpoint is None:
        return set()
    if isinstance(checkpoint, (str, Path)):
        from .journal import read_journal

        entries = read_journal(checkpoint)
        return {e.accession for e in entries if e.stage == "Ingested"}
    return {str(a) for a in checkpoint}


def iter_filing_records(path):
    """Yield ``(line_number, dict)`` for every non-blank line of a filings file."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                yield lineno, json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON ({exc.msg})", lineno) from exc


def read_filings(path, checkpoint=None) -> list:
    """Parse a filings file, skipping accessions already committed to ``checkpoint``."""
    skip = _committed_accessions(checkpoint)
    out = []
    for lineno, rec in iter_filing_records(path):
        if skip and isinstance(rec, dict) and rec.get("accession"):
            try:
                if parse_accession(rec["accession"]).canonical in skip:
                    continue
            except MalformedAccession as exc:
                raise SchemaViolation(str(exc), lineno) from exc
        out.append(filing_from_record(rec, lineno))
    return out


def group_firms(filings: Iterable[Filing], returns: Optional[dict] = None) -> list:
    """Group filings into firm histories ordered by (issuer, filing_time, accession)."""
    by_issuer = defaultdict(list)
    for f in filings:
        by_issuer[f.issuer.id].append(f)
    firms = []
    for cik in sorted(by_issuer):
        fs = sorted(by_issuer[cik], key=lambda f: f.sort_key)
        issuer = next((f.issuer for f in fs if f.is_periodic), fs[0].issuer)
        firms.append(FirmHistory(issuer, fs, (returns or {}).get(cik)))
    return firms


def load_corpus(path, checkpoint=None, returns_path=None) -> list:
    """Load a filings file into :class:`FirmHistory` values.

    ``checkpoint`` is a journal path or an iterable of canonical accession
    strings; accessions with an ``Ingested`` journal entry are skipped.
    """
    returns = load_returns(returns_path) if returns_path else None
    return group_firms(read_filings(path, checkpoint), returns)


def load_returns(path) -> dict:
    """Read ``date,cik,firm_return,benchmark_return`` rows into per-CIK series."""
    rows = defaultdict(list)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing = {"date", "cik", "firm_return", "benchmark_return"} - set(reader.fieldnames or ())
        if missing:
            raise SchemaViolation(f"returns file lacks columns {sorted(missing)}", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                rows[int(row["cik"])].append(
                    (np.datetime64(row["date"], "D"), float(row["firm_return"]), float(row["benchmark_return"]))
                )
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(str(exc), lineno) from exc
    out = {}
    for cik, items in rows.items():
        items.sort(key=lambda r: r[0])
        out[cik] = ReturnSeries(
            np.array([r[0] for r in items], dtype="datetime64[D]"),
            np.array([r[1] for r in items]),
            np.array([r[2] for r in items]),
        )
    return out


def load_master(path) -> dict:
    """Read the ``cik,name`` master directory."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if not {"cik", "name"} <= set(reader.fieldnames or ()):
            raise SchemaViolation("master file needs columns cik,name", 1)
        master = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                master[int(row["cik"])] = normalize_name(row["name"])
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(str(exc), lineno) from exc
    return master


# ---------------------------------------------------------------------------
# reconciliation
# ---------------------------------------------------------------------------


@dataclass
class ReconciliationReport:
    matched: int = 0
    unmatched: int = 0
    unmatched_ids: tuple = ()
    institutions: int = 0
    individuals: int = 0

    def __add__(self, other):
        return ReconciliationReport(
            self.matched + other.matched,
            self.unmatched + other.unmatched,
            tuple(sorted(set(self.unmatched_ids) | set(other.unmatched_ids))),
            self.institutions + other.institutions,
            self.individuals + other.individuals,
        )

    def as_dict(self):
        return {
            "matched": self.matched,
            "unmatched": self.unmatched,
            "unmatched_ids": list(self.unmatched_ids),
            "institutions": self.institutions,
            "individuals": self.individuals,
        }


def reconcile_ciks(filings, master: dict, tokens=INSTITUTION_TOKENS):
    """Replace entity names with master-directory names and classify owners.

    Counts are over distinct CIKs. Unmatched CIKs keep their names and are
    listed in the report; no record is dropped.
    """
    if not master:
        raise ValueError("master directory is empty")
    matched, unmatched = set(), set()
    owner_kinds = {}

    def fix(entity: Cik, is_owner: bool) -> Cik:
        name = master.get(entity.id)
        (matched if name is not None else unmatched).add(entity.id)
        name = name if name is not None else entity.display_name
        kind = classify_entity(name, tokens) if is_owner else CikKind.ISSUER
        if is_owner:
            owner_kinds[entity.id] = kind
        return Cik(entity.id, name, kind)

    out = []
    for f in filings:
        issuer = fix(f.issuer, False)
        owner = fix(f.owner, True) if f.owner is not None else None
        out.append(
            Filing(
                f.accession, issuer, f.form_type, f.filing_time, f.body_text,
                f.file_size, f.transaction_time, owner,
            )
        )
    report = ReconciliationReport(
        matched=len(matched),
        unmatched=len(unmatched),
        unmatched_ids=tuple(sorted(unmatched)),
        institutions=sum(k is CikKind.INSTITUTION for k in owner_kinds.values()),
        individuals=sum(k is CikKind.INDIVIDUAL for k in owner_kinds.values()),
    )
    return out, report


# ---------------------------------------------------------------------------
# partitioned storage
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def _flatten(corpus) -> list:
    out = []
    for item in corpus:
        if isinstance(item, FirmHistory):
            out.extend(item.filings)
        else:
            out.append(item)
    return out


def write_partitioned(corpus, out_dir, prefix_len: int = 7, block_rows: int = 5000) -> dict:
    """Write filings as gzip-compressed JSON-lines blocks partitioned by CIK prefix and year.

    Returns the manifest, which is also written to ``out_dir/manifest.json``.
    """
    filings = sorted(_flatten(corpus), key=lambda f: f.sort_key)
    if not filings:
        raise ValueError("cannot partition an empty corpus")
    if not 1 <= prefix_len <= 10:
        raise ValueError("prefix_len must be in 1..10")
    out_dir = Path(out_dir)
    parts = defaultdict(list)
    for f in filings:
        key = (f"{f.issuer.id:010d}"[:prefix_len], f.filing_time.year)
        parts[key].append(f)

    entries = []
    try:
        for (prefix, year) in sorted(parts):
            rows = parts[(prefix, year)]
            rel_dir = Path(f"cik_prefix={prefix}") / f"year={year}"
            (out_dir / rel_dir).mkdir(parents=True, exist_ok=True)
            blocks, raw_bytes, stored_bytes = [], 0, 0
            for b, start in enumerate(range(0, len(rows), block_rows)):
                payload = "".join(
                    json.dumps(f.to_record(), sort_keys=True, ensure_ascii=False) + "\n"
                    for f in rows[start : start + block_rows]
                ).encode("utf-8")
                packed = gzip.compress(payload, compresslevel=9, mtime=0)
                rel = rel_dir / f"block-{b:05d}.jsonl.gz"
                (out_dir / rel).write_bytes(packed)
                blocks.append(rel.as_posix())
                raw_bytes += len(payload)
                stored_bytes += len(packed)
            entries.append(
                {
                    "cik_prefix": prefix,
                    "year": year,
                    "rows": len(rows),
                    "blocks": blocks,
                    "raw_bytes": raw_bytes,
                    "stored_bytes": stored_bytes,
                }
            )
        raw_total = sum(e["raw_bytes"] for e in entries)
        stored_total = sum(e["stored_bytes"] for e in entries)
        manifest = {
            "codec": "gzip",
            "prefix_len": prefix_len,
            "partitions": entries,
            "rows": sum(e["rows"] for e in entries),
            "raw_bytes": raw_total,
            "stored_bytes": stored_total,
            "ratio": stored_total / raw_total,
        }
        (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write partitions under {out_dir}: {exc}") from exc
    return manifest


def read_partitioned(out_dir) -> list:
    """Read back every filing listed in the manifest, in corpus order."""
    out_dir = Path(out_dir)
    try:
        manifest = json.loads((out_dir / MANIFEST_NAME).read_text())
        filings = []
        for part in manifest["partitions"]:
            for rel in part["blocks"]:
                text = gzip.decompress((out_dir / rel).read_bytes()).decode("utf-8")
                filings.extend(filing_from_record(json.loads(line)) for line in text.splitlines())
    except OSError as exc:
        raise IoFailure(f"cannot read partitions under {out_dir}: {exc}") from exc
    return sorted(filings, key=lambda f: f.sort_key)


def dump_filings(path, filings) -> None:
    """Write filings in the line-delimited input format."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for f in filings:
                fh.write(json.dumps(f.to_record(), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
