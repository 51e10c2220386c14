"""Command-line surface: ingest, select, generate, review, match, metrics, report.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 backend failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .calibration import (
    EmptyInput,
    load_outcomes,
    metrics_summary,
    reliability_table,
    threshold_sweep,
    write_reliability_csv,
)
from .config import AppConfig, load_config, make_gateway
from .events import CorpusCorrupt, read_event_corpus
from .gateway import BackendUnavailable, BudgetExceeded
from .generation import generate_for_cve
from .nuclei import MissingField, YamlError, parse_template, record_from_template
from .rules import SchemaError, match_corpus, parse_rule
from .safe_regex import RegexError
from .selector import load_kev_catalog, load_news_ids, rank_and_select
from .store import Store, StoreError
from .validation import PipelineValidator, load_reputation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rulesmith", description=__doc__)
    parser.add_argument("--store", default="./store", help="store directory (default ./store)")
    parser.add_argument("--config", default=None, help="config JSON file")
    parser.add_argument("--backend", choices=("mock", "provider"), default=None, help="override backend kind")
    parser.add_argument("--seed", type=int, default=None, help="override generation/mock seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a Nuclei template directory into the store")
    p.add_argument("template_dir")

    p = sub.add_parser("select", help="score and rank CVEs lacking approved rules")
    p.add_argument("--kev", default=None, help="CISA KEV catalog JSON")
    p.add_argument("--news", default=None, help="newline-delimited CVE ids from news feeds")
    p.add_argument("--threshold", type=float, default=None, help="override selection threshold")

    p = sub.add_parser("generate", help="run candidate generation + automated validation")
    p.add_argument("cve_ids", nargs="*", help="explicit CVE ids")
    p.add_argument("--top", type=int, default=None, help="process the N highest-priority CVEs")
    p.add_argument(
        "--synthetic-only",
        action="store_true",
        help="disable the confidence gate (baseline comparison mode)",
    )

    p = sub.add_parser("review", help="human review queue")
    review_sub = p.add_subparsers(dest="action", required=True)
    review_sub.add_parser("list")
    q = review_sub.add_parser("show")
    q.add_argument("candidate")
    q = review_sub.add_parser("approve")
    q.add_argument("candidate")
    q.add_argument("-m", "--message", default="")
    q = review_sub.add_parser("reject")
    q.add_argument("candidate")
    q.add_argument("-m", "--message", default=None)

    p = sub.add_parser("match", help="evaluate a rule file against a traffic corpus")
    p.add_argument("rule_file")
    p.add_argument("corpus_file")

    p = sub.add_parser("metrics", help="ECE/AUROC + reliability table from outcomes JSONL")
    p.add_argument("outcomes_file")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("report", help="per-variant calibration report with figures")
    p.add_argument("outcomes_file")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out-dir", default="report")

    return parser


# ── commands ─────────────────────────────────────────────────────────────────


def cmd_ingest(store: Store, args: argparse.Namespace) -> int:
    template_dir = Path(args.template_dir)
    if not template_dir.is_dir():
        print(f"not a directory: {template_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    new = updated = skipped = 0
    paths = sorted(list(template_dir.rglob("*.yaml")) + list(template_dir.rglob("*.yml")))
    for path in paths:
        try:
            template = parse_template(path.read_text(encoding="utf-8"))
            record = record_from_template(template)
        except (YamlError, MissingField, OSError) as exc:
            logger.warning("skipping %s: %s", path, exc)
            skipped += 1
            continue
        if store.has_record(record.cve_id):
            existing = store.load_record(record.cve_id)
            record = replace(record, priority_score=existing.priority_score, score_audit=existing.score_audit)
            updated += 1
        else:
            new += 1
        store.save_record(record)
    print(f"ingested {new} new, {updated} updated, {skipped} skipped")
    return EXIT_OK


def cmd_select(store: Store, config: AppConfig, args: argparse.Namespace) -> int:
    scoring = config.scoring
    if args.threshold is not None:
        scoring = replace(scoring, selection_threshold=args.threshold)
    kev_ids = set()
    if args.kev:
        with open(args.kev, encoding="utf-8") as fh:
            kev_ids = load_kev_catalog(fh)
    news_ids = set()
    if args.news:
        with open(args.news, encoding="utf-8") as fh:
            news_ids = load_news_ids(fh)

    records = [r for r in store.load_records() if not store.has_approved_rule(r.cve_id)]
    selected, scored = rank_and_select(records, scoring, kev_ids, news_ids)
    for record in scored:
        store.save_record(record)
        store.save_selection_audit(record)

    selected_ids = {r.cve_id for r in selected}
    print(f"{'rank':<5} {'cve':<18} {'score':>7}  selected")
    for rank, record in enumerate(scored, start=1):
        marker = "yes" if record.cve_id in selected_ids else "no"
        print(f"{rank:<5} {record.cve_id:<18} {record.priority_score:>7.1f}  {marker}")
    print(f"{len(selected)} of {len(scored)} selected (threshold {scoring.selection_threshold})")
    return EXIT_OK


def cmd_generate(store: Store, config: AppConfig, args: argparse.Namespace) -> int:
    if not args.cve_ids and args.top is None:
        print("generate: pass CVE ids or --top N", file=sys.stderr)
        return EXIT_USAGE

    gen_config = config.generation
    if args.seed is not None:
        gen_config = replace(gen_config, rng_seed=args.seed)

    corpus = reputation = None
    if config.corpus_path and config.reputation_path:
        corpus = read_event_corpus(config.corpus_path)
        reputation = load_reputation(config.reputation_path)

    if args.cve_ids:
        records = [store.load_record(cve_id) for cve_id in args.cve_ids]
    else:
        ranked = [
            r
            for r in store.load_records()
            if r.priority_score is not None and not store.has_approved_rule(r.cve_id)
        ]
        ranked.sort(key=lambda r: (-r.priority_score, r.cve_id))
        records = ranked[: args.top]
        if not records:
            print("no scored CVEs to process; run `select` first", file=sys.stderr)
            return EXIT_VALIDATION

    for record in records:
        # fresh gateway per record: the completion budget is per pipeline run
        gateway = make_gateway(config.backend, backend_kind=args.backend, seed=args.seed)
        validator = PipelineValidator(
            gateway,
            thresholds=config.thresholds,
            ip_config=config.ip_validation,
            variant=config.judge_variant,
            corpus=corpus,
            reputation=reputation,
            enable_confidence=not args.synthetic_only,
            prompt_dir=config.prompt_dir,
        )
        outcome = generate_for_cve(
            record,
            gen_config,
            gateway,
            validator,
            human_feedback=store.human_feedback(record.cve_id),
        )
        manifest_path = store.save_run(record, gen_config, outcome)
        print(f"{record.cve_id}:")
        for candidate in outcome.candidates:
            stage = candidate.validation.stage_reached if candidate.validation else "-"
            print(
                f"  cand{candidate.candidate_index} temp={candidate.temperature:.3f} "
                f"attempts={candidate.attempt} status={candidate.status} stage={stage}"
            )
        best = f"cand{outcome.best.candidate_index}" if outcome.best else "none"
        print(f"  best: {best}")
        print(f"  manifest: {manifest_path}")
    return EXIT_OK


def cmd_review(store: Store, args: argparse.Namespace) -> int:
    if args.action == "list":
        pending = store.pending_candidates()
        if not pending:
            print("review queue is empty")
        for ref, candidate in pending:
            print(f"{ref:<28} confidence={candidate.confidence:.3f} attempts={candidate.attempt}")
        return EXIT_OK
    if args.action == "show":
        candidate = store.load_candidate(args.candidate)
        from .store import candidate_to_json

        print(json.dumps(candidate_to_json(candidate), indent=2, sort_keys=True))
        return EXIT_OK
    if args.action == "approve":
        rule_path = store.approve(args.candidate, args.message)
        print(f"approved; rule written to {rule_path}")
        return EXIT_OK
    # reject
    if not args.message:
        print("reject requires -m <comment>", file=sys.stderr)
        return EXIT_USAGE
    store.reject(args.candidate, args.message)
    print(f"rejected {args.candidate}; comment recorded as feedback")
    return EXIT_OK


def cmd_match(args: argparse.Namespace) -> int:
    rule = parse_rule(Path(args.rule_file).read_text(encoding="utf-8"))
    corpus = read_event_corpus(args.corpus_file)
    stats = match_corpus(rule, corpus)
    print(
        json.dumps(
            {
                "matched": stats.matched,
                "distinct_ip_count": len(stats.distinct_ips),
                "distinct_ips": sorted(stats.distinct_ips),
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    with open(args.outcomes_file, encoding="utf-8") as fh:
        samples = load_outcomes(fh)
    summary = metrics_summary(samples, args.bins)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_reliability_csv(out_dir / "reliability.csv", reliability_table(samples, args.bins))
    auroc = "n/a" if summary["auroc"] is None else f"{summary['auroc']:.4f}"
    print(f"n={summary['n']} auroc={auroc} ece={summary['ece']:.4f}")
    print(f"wrote {metrics_path} and {out_dir / 'reliability.csv'}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from .reporting import render_reliability_diagram, render_threshold_sweep, render_variant_comparison

    with open(args.outcomes_file, encoding="utf-8") as fh:
        samples = load_outcomes(fh)
    if not samples:
        print("no samples in outcomes file", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    groups: dict[str, list] = {}
    for sample in samples:
        groups.setdefault(sample.variant or "unlabeled", []).append(sample)

    summaries: dict[str, dict] = {}
    written: list[Path] = []
    for variant in sorted(groups):
        group = groups[variant]
        summaries[variant] = metrics_summary(group, args.bins)
        table = reliability_table(group, args.bins)
        csv_path = out_dir / f"reliability_{variant}.csv"
        write_reliability_csv(csv_path, table)
        written.append(csv_path)
        written.append(
            render_reliability_diagram(table, out_dir / f"reliability_{variant}.png", title=f"Reliability: {variant}")
        )

    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(report_path)

    comparison_path = out_dir / "comparison.csv"
    with open(comparison_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "n", "auroc", "ece"])
        for variant, summary in sorted(summaries.items()):
            writer.writerow([variant, summary["n"], summary["auroc"], summary["ece"]])
    written.append(comparison_path)
    written.append(render_variant_comparison(summaries, out_dir / "comparison.png"))

    sweep = threshold_sweep(samples)
    sweep_path = out_dir / "threshold_sweep.csv"
    with open(sweep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "surviving_correct", "surviving_incorrect"])
        writer.writerows(sweep)
    written.append(sweep_path)
    written.append(render_threshold_sweep(sweep, out_dir / "threshold_sweep.png"))

    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = load_config(args.config)
        if args.command == "ingest":
            return cmd_ingest(Store(args.store), args)
        if args.command == "select":
            return cmd_select(Store(args.store), config, args)
        if args.command == "generate":
            return cmd_generate(Store(args.store), config, args)
        if args.command == "review":
            return cmd_review(Store(args.store), args)
        if args.command == "match":
            return cmd_match(args)
        if args.command == "metrics":
            return cmd_metrics(args)
        return cmd_report(args)
    except (BackendUnavailable, BudgetExceeded) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (StoreError, SchemaError, RegexError, CorpusCorrupt, EmptyInput, MissingField, YamlError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
