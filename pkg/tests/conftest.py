import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from disclosure_audit import kernels
from disclosure_audit.ingest import Cik, CikKind, Filing, FirmHistory, ReturnSeries, parse_accession

BACKENDS = ["numpy"] + (["numba"] if kernels.NUMBA_AVAILABLE else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    monkeypatch.setattr(kernels, "BACKEND", request.param)
    return request.param


def utc(y, m, d, h=21):
    return datetime(y, m, d, h, tzinfo=timezone.utc)


def make_filing(cik, seq, when, body="growth improved", form="10-Q", tx=None, owner=None, year=None):
    year = when.year % 100 if year is None else year
    filer = owner.id if owner is not None else cik
    return Filing(
        accession=parse_accession(f"{filer:010d}-{year:02d}-{seq:06d}"),
        issuer=Cik(cik, f"FIRM {cik} INC", CikKind.ISSUER),
        form_type=form,
        filing_time=when,
        body_text=body,
        file_size=len(body) + 100,
        transaction_time=tx,
        owner=owner,
    )


def flat_returns(start, n_days, abnormal=None):
    """Business-day series with benchmark 0.001 and optional {date: abnormal} offsets."""
    days = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days * 2)
    days = days[np.is_busday(days)][:n_days]
    bench = np.full(days.size, 0.001)
    firm = bench.copy()
    for d, a in (abnormal or {}).items():
        firm[np.searchsorted(days, np.datetime64(d, "D"))] += a
    return ReturnSeries(days, firm, bench)


THREE_FILINGS = [
    {
        "accession": "0000000101-23-000001",
        "issuer_cik": 101,
        "issuer_name": "Alpha Corp",
        "form_type": "10-Q",
        "transaction_time": None,
        "filing_time": "2023-05-01T21:00:00Z",
        "body_text": "revenue growth improved despite adverse weather",
        "file_size": 1200,
    },
    {
        "accession": "0000000101-23-000002",
        "issuer_cik": 101,
        "issuer_name": "Alpha Corp",
        "form_type": "10-Q",
        "transaction_time": None,
        "filing_time": "2023-08-01T21:00:00Z",
        "body_text": "losses widened and impairment charges were recorded",
        "file_size": 1300,
    },
    {
        "accession": "0000000202-23-000001",
        "issuer_cik": 202,
        "issuer_name": "Beta Holdings LLC",
        "form_type": "10-K",
        "transaction_time": None,
        "filing_time": "2023-03-01T21:00:00Z",
        "body_text": "stable results with strong demand",
        "file_size": 2100,
    },
]


@pytest.fixture
def three_filing_file(tmp_path):
    path = tmp_path / "filings.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in THREE_FILINGS))
    return path


@pytest.fixture
def firm_factory():
    return make_filing, FirmHistory, utc, timedelta


@pytest.fixture(scope="session")
def small_synth():
    from disclosure_audit import synth

    return synth.build(synth.GeneratorSpec(seed=3, n_firms=12, quarters_per_firm=8, noise_level=0.5,
                                           shock_rate=0.3))


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines after the run, one per criterion that ran."""
    import re
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    ran = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, ()):
            m = re.search(r"test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and (rep.when == "call" or outcome == "error"):
                ran[int(m.group(1))] = outcome
    if not ran:
        return
    results = getattr(mod, "RESULTS", {})
    terminalreporter.section("acceptance criteria")
    for n in sorted(ran):
        terminalreporter.write_line(results.get(n, f"criterion {n}: FAIL  did not complete ({ran[n]})"))
