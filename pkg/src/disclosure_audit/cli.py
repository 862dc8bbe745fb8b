"""Command-line front end.

Exit status: 0 success, 1 validation or usage error, 2 I/O or journal error,
3 when the ``--kill-after-seq`` test hook fired.
"""

import argparse
import json
import sys
from pathlib import Path

from . import orchestrator
from .config import PipelineConfig, load_config
from .econometrics import AuditSummary
from .errors import AuditError, ConfigError, IoFailure, SimulatedCrash, StorageError, ValidationError
from .ingest import group_firms, load_master, load_returns, read_filings, reconcile_ciks, write_partitioned
from .synth import GeneratorSpec, generate

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_KILLED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# config keys that may be overridden from the command line
_OVERRIDES = {
    "omega": float,
    "n_samples": int,
    "seed": int,
    "theta": float,
    "depth_cap": int,
    "window_days": int,
    "scorer": str,
    "routing": str,
    "workers": int,
    "positive_lexicon": str,
    "negative_lexicon": str,
    "complexity_lexicon": str,
    "hedging_lexicon": str,
    "covenant_keywords": str,
}


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    for key, kind in _OVERRIDES.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=kind, default=None)
    p.add_argument("--fsync", action="store_true", default=None, help="fsync every journal append")


def build_parser():
    parser = _Parser(prog="disclosure-audit", description=__doc__.splitlines()[0])
    parser.add_argument("--show-config", action="store_true", help="print the effective configuration and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse, reconcile and write partitioned storage")
    p.add_argument("--input")
    p.add_argument("--master")
    p.add_argument("--out")

    p = sub.add_parser("audit", help="run (or resume) the full audit")
    p.add_argument("--input")
    p.add_argument("--returns")
    p.add_argument("--master")
    p.add_argument("--journal")
    p.add_argument("--report")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--kill-after-seq", type=int, default=None, help=argparse.SUPPRESS)
    _add_config_flags(p)

    p = sub.add_parser("regress", help="re-run the interaction regression on a report")
    p.add_argument("--report")
    p.add_argument("--with-size", action="store_true", help="add log file size as a control")

    p = sub.add_parser("report", help="render the audit summary of a report")
    p.add_argument("--report")

    p = sub.add_parser("simulate", help="write a synthetic corpus")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-firms", type=int, default=200)
    p.add_argument("--quarters", type=int, default=12)
    p.add_argument("--shock-rate", type=float, default=0.1)
    p.add_argument("--insider-plant-rate", type=float, default=0.87)
    p.add_argument("--camouflage-rate", type=float, default=0.5)
    p.add_argument("--noise-level", type=float, default=1.0)
    p.add_argument("--regime-mix", default="0.25,0.25,0.25,0.25")
    p.add_argument("--market-coverage", type=float, default=1.0)

    # --show-config may follow a subcommand too
    for choice in sub.choices.values():
        choice.add_argument("--show-config", action="store_true", default=argparse.SUPPRESS,
                            help=argparse.SUPPRESS)
    return parser


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"missing required flag --{name.replace('_', '-')}")


def _effective_config(args) -> PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in list(_OVERRIDES) + ["fsync"]}
    if getattr(args, "journal", None):
        overrides["journal"] = args.journal
    return load_config(getattr(args, "config", None), **overrides)


def _meta_path(journal) -> Path:
    return Path(str(journal) + ".meta.json")


def _write_json(path, obj):
    try:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _load_firms(input_path, returns_path=None, master_path=None, out=sys.stderr):
    filings = read_filings(input_path)
    if master_path:
        filings, rec = reconcile_ciks(filings, load_master(master_path))
        print(f"reconciled CIKs: {rec.matched} matched, {rec.unmatched} unmatched", file=out)
    returns = load_returns(returns_path) if returns_path else None
    return group_firms(filings, returns)


def cmd_ingest(args, out):
    _require(args, "input", "out")
    filings = read_filings(args.input)
    if not filings:
        raise ConfigError(f"{args.input} holds no filings")
    report = None
    if args.master:
        filings, report = reconcile_ciks(filings, load_master(args.master))
    manifest = write_partitioned(filings, args.out)
    summary = {
        "rows": manifest["rows"],
        "partitions": len(manifest["partitions"]),
        "raw_bytes": manifest["raw_bytes"],
        "stored_bytes": manifest["stored_bytes"],
        "ratio": manifest["ratio"],
    }
    if report is not None:
        summary["reconciliation"] = report.as_dict()
    print(json.dumps(summary, indent=2, sort_keys=True), file=out)
    return EXIT_OK


def cmd_audit(args, out):
    _require(args, "journal")
    meta_file = _meta_path(args.journal)
    if args.resume:
        if not meta_file.exists():
            raise IoFailure(f"nothing to resume: {meta_file} not found")
        meta = _read_json(meta_file)
        config = PipelineConfig(**meta["config"])
        inputs = meta["inputs"]
    else:
        _require(args, "input")
        if Path(args.journal).exists() and Path(args.journal).stat().st_size > 0:
            raise IoFailure(f"journal {args.journal} already exists; pass --resume to continue it")
        config = _effective_config(args)
        inputs = {
            "input": str(Path(args.input).resolve()),
            "returns": str(Path(args.returns).resolve()) if args.returns else None,
            "master": str(Path(args.master).resolve()) if args.master else None,
            "report": str(Path(args.report).resolve()) if args.report else None,
        }
        Path(args.journal).parent.mkdir(parents=True, exist_ok=True)
        _write_json(meta_file, {"config": config.as_dict(), "inputs": inputs})
    report_path = args.report or inputs.get("report")

    firms = _load_firms(inputs["input"], inputs.get("returns"), inputs.get("master"))
    graph = orchestrator.build_graph(config)
    try:
        result = orchestrator.run(graph, firms, args.journal, config, kill_after_seq=args.kill_after_seq)
    except SimulatedCrash as exc:
        print(f"killed: {exc}", file=sys.stderr)
        return EXIT_KILLED
    if report_path:
        try:
            Path(report_path).write_bytes(result.report_bytes)
        except OSError as exc:
            raise IoFailure(f"cannot write report {report_path}: {exc}") from exc
        print(f"report {report_path} sha256={result.digest}", file=out)
    else:
        out.write(result.report_bytes.decode("utf-8"))
    return EXIT_OK


def _load_report(path):
    report = _read_json(path)
    if not isinstance(report, dict) or report.get("format") != orchestrator.REPORT_FORMAT:
        raise ConfigError(f"{path} is not an audit report")
    return report


def cmd_regress(args, out):
    _require(args, "report")
    report = _load_report(args.report)
    block = orchestrator.regression_block(report["filings"], with_size=args.with_size)
    print(json.dumps(block, indent=2, sort_keys=True), file=out)
    return EXIT_OK if "error" not in block else EXIT_INVALID


def _fmt(x, spec=".6g"):
    return "n/a" if x is None else format(x, spec)


def render_summary(report) -> str:
    s = AuditSummary(**report["summary"])
    lines = ["Audit summary", "============="]
    lines.append(f"filings audited        {s.n_audited + s.n_unclassified}")
    lines.append(f"escalations            {s.n_escalated}")
    lines.append(f"welfare recovery (%)   {_fmt(s.gamma_total)}")
    lines.append(f"audit precision        {_fmt(s.audit_precision)}")
    lines.append(f"insider sentiment      {_fmt(s.insider_sentiment_mean)}")
    lines.append(f"resilience             {_fmt(s.resilience)}")
    lines.append("")
    lines.append(f"{'regime':<22}{'count':>7}{'mean CAR':>14}{'mean V':>12}{'mean W':>14}")
    for name, row in s.regime_census.items():
        lines.append(
            f"{name:<22}{row['count']:>7}{_fmt(row['mean_car']):>14}"
            f"{_fmt(row['mean_velocity']):>12}{_fmt(row['mean_welfare_gap']):>14}"
        )
    if s.n_unclassified:
        lines.append(f"{'(unclassified)':<22}{s.n_unclassified:>7}")
    reg = report.get("regression", {})
    lines.append("")
    lines.append("Welfare gap regression (cluster-robust by issuer)")
    if "coefficients" in reg:
        lines.append(f"{'term':<18}{'coef':>14}{'se':>14}{'t':>10}{'p':>10}")
        for c in reg["coefficients"]:
            lines.append(
                f"{c['name']:<18}{_fmt(c['coef']):>14}{_fmt(c['se']):>14}"
                f"{_fmt(c['t'], '.3f'):>10}{_fmt(c['p'], '.3g'):>10}"
            )
        lines.append(f"n = {reg['n_obs']}, clusters = {reg['n_clusters']}")
    else:
        lines.append(f"not estimated: {reg.get('error')}")
    lines.append("")
    lines.append("Escalations")
    for e in report.get("escalations", []):
        kinds = sorted({f["trigger_kind"] for f in e["findings"]}) or ["none"]
        lines.append(
            f"  {e['accession']}  issuer {e['issuer']}  alpha* {_fmt(e['alpha_star'])}  "
            f"findings {','.join(kinds)}  depth {e['depth_used']}"
        )
    return "\n".join(lines) + "\n"


def cmd_report(args, out):
    _require(args, "report")
    out.write(render_summary(_load_report(args.report)))
    return EXIT_OK


def cmd_simulate(args, out):
    _require(args, "out")
    try:
        mix = tuple(float(x) for x in args.regime_mix.split(","))
    except ValueError as exc:
        raise UsageError(f"--regime-mix: {exc}") from exc
    spec = GeneratorSpec(
        seed=args.seed,
        n_firms=args.n_firms,
        quarters_per_firm=args.quarters,
        regime_mix=mix,
        shock_rate=args.shock_rate,
        insider_plant_rate=args.insider_plant_rate,
        camouflage_rate=args.camouflage_rate,
        noise_level=args.noise_level,
        market_coverage=args.market_coverage,
    )
    paths = generate(spec, args.out)
    print(json.dumps(paths, indent=2, sort_keys=True), file=out)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "audit": cmd_audit,
    "regress": cmd_regress,
    "report": cmd_report,
    "simulate": cmd_simulate,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.show_config:
            out.write(_effective_config(args).dumps())
            return EXIT_OK
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StorageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
