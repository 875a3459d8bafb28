"""Command line: extract, evaluate, report, schema, prompt."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus, metrics, report
from .backend import HTTPBackend, StubBackend, build_payload, load_providers
from .pipeline import (DEFAULT_MAX_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS, process_corpus,
                       replay_table_from_gold, summarize)
from .prompt import Ablation, build_prompt, load_exemplars, output_schema, render_messages
from .rules import load_rule_pack
from .taxonomy import load_taxonomy

log = logging.getLogger("phigrade")


def _ablation(args) -> Ablation:
    return Ablation(few_shot=not args.no_few_shot, schema=not args.no_schema,
                    rules=not getattr(args, "no_rules", False))


def _add_prompt_args(p):
    p.add_argument("--taxonomy", help="taxonomy YAML (default: bundled)")
    p.add_argument("--exemplars", help="few-shot exemplars, JSON lines (default: bundled)")
    p.add_argument("--no-few-shot", action="store_true", help="drop exemplar turns")
    p.add_argument("--no-schema", action="store_true", help="do not attach the output schema")


def _make_backend(args, records):
    if args.backend == "stub":
        if not args.replay:
            raise SystemExit("--backend stub needs --replay GOLD_FILE")
        taxonomy = load_taxonomy(args.taxonomy)
        gold = corpus.read_gold(args.replay, taxonomy)
        table = replay_table_from_gold(records, gold, args.max_chunk_chars, args.overlap_chars)
        return StubBackend(table, max_in_flight=args.concurrency or 8)
    providers = load_providers(args.providers)
    if args.backend not in providers:
        raise SystemExit(f"unknown backend {args.backend!r}; known: stub, {', '.join(providers)}")
    config = providers[args.backend]
    if args.concurrency:
        config = replace(config, max_in_flight=args.concurrency)
    return HTTPBackend(config, audit_log=args.audit_log)


def cmd_extract(args) -> int:
    taxonomy = load_taxonomy(args.taxonomy)
    ablation = _ablation(args)
    exemplars = load_exemplars(args.exemplars, taxonomy) if ablation.few_shot else []
    bundle = build_prompt(taxonomy, exemplars, ablation)
    pack = load_rule_pack(args.rules, taxonomy) if ablation.rules else None
    records = corpus.read_corpus(args.input, id_column=args.id_column,
                                 description_column=args.description_column)
    if args.fill_names:
        records = corpus.fill_names(records, corpus.NamePool.generate(args.name_seed))
    backend = _make_backend(args, records)
    results = process_corpus(records, bundle, backend, pack, taxonomy,
                             args.max_chunk_chars, args.overlap_chars,
                             max_workers=args.concurrency)
    corpus.write_results(results, args.output, taxonomy=taxonomy)
    if args.rejection_log:
        with open(args.rejection_log, "w", encoding="utf-8") as fh:
            for r in results:
                for rej in r.rejections:
                    fh.write(json.dumps({"record_id": r.record_id, "item": rej.item,
                                         "reason": rej.reason}, ensure_ascii=False,
                                        default=repr) + "\n")
    summary = summarize(results)
    print(f"{summary['records']} records, {summary['failed']} failed, "
          f"{summary['triples']} triples, {summary['rejections']} rejected items "
          f"-> {args.output}")
    if summary["failed_ids"]:
        print("failed:", ", ".join(summary["failed_ids"]), file=sys.stderr)
    return 0


def _parse_floors(values) -> dict[str, float]:
    floors = {}
    for v in values or ():
        name, _, num = v.partition("=")
        name = name.strip().lower().replace("-", "_")
        if name not in ("mcif", "mccr", "msgr", "micro_f1") or not num:
            raise SystemExit(f"bad --floor {v!r}; use e.g. mccr=0.9")
        floors[name] = float(num)
    return floors


def cmd_evaluate(args) -> int:
    floors = _parse_floors(args.floor)
    taxonomy = load_taxonomy(args.taxonomy)
    gold = corpus.read_gold(args.gold, taxonomy)
    preds = metrics.items_by_record(corpus.read_rows(args.predictions))
    result = metrics.evaluate(gold, preds, taxonomy)
    print(result.table())
    if args.output:
        payload = result.to_dict()
        if not args.per_record:
            payload.pop("per_record")
        Path(args.output).write_text(
            json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    failed = metrics.check_floors(result, floors)
    if failed:
        print("below floor: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    rows = corpus.read_rows(args.input)
    if not args.include_off_vocabulary:
        taxonomy = load_taxonomy(args.taxonomy)
        rows = [r for r in rows if taxonomy.is_compatible(r.category)]
    dists = report.stratify(rows, args.top_k)
    print(report.format_table(dists))
    if args.output:
        report.emit_plot_data(dists, args.output)
    return 0


def cmd_schema(args) -> int:
    print(json.dumps(output_schema(load_taxonomy(args.taxonomy)), ensure_ascii=False, indent=2))
    return 0


def cmd_prompt(args) -> int:
    """Print the request body that would be sent for one input text."""
    taxonomy = load_taxonomy(args.taxonomy)
    ablation = _ablation(args)
    exemplars = load_exemplars(args.exemplars, taxonomy) if ablation.few_shot else []
    bundle = build_prompt(taxonomy, exemplars, ablation)
    text = args.text if args.text is not None else sys.stdin.read()
    config = load_providers(args.providers)[args.backend]
    payload = build_payload(config, render_messages(bundle, text), bundle.output_schema)
    print(json.dumps(payload, ensure_ascii=False, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phigrade", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract and grade triples from a corpus")
    p.add_argument("--input", required=True, help="records (.xlsx, .csv, .jsonl)")
    p.add_argument("--output", required=True, help="predictions (.jsonl, .csv, .xlsx)")
    p.add_argument("--backend", default="stub", help="provider name or 'stub'")
    p.add_argument("--providers", help="provider config YAML (default: bundled)")
    p.add_argument("--replay", help="gold file replayed by the stub backend")
    p.add_argument("--rules", help="rule pack YAML (default: bundled)")
    p.add_argument("--no-rules", action="store_true", help="disable the override rule layer")
    _add_prompt_args(p)
    p.add_argument("--max-chunk-chars", type=int, default=DEFAULT_MAX_CHUNK_CHARS)
    p.add_argument("--overlap-chars", type=int, default=DEFAULT_OVERLAP_CHARS)
    p.add_argument("--concurrency", type=int, help="records in flight (default: backend cap)")
    p.add_argument("--id-column", default="record_id")
    p.add_argument("--description-column", default="Description")
    p.add_argument("--fill-names", action="store_true", help="replace name placeholders")
    p.add_argument("--name-seed", type=int, default=2020)
    p.add_argument("--rejection-log", help="write validator rejections as JSON lines")
    p.add_argument("--audit-log", help="append redacted request events as JSON lines")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--output", help="JSON report path")
    p.add_argument("--per-record", action="store_true", help="include per-record diagnostics")
    p.add_argument("--floor", action="append", metavar="METRIC=VALUE",
                   help="exit 1 if METRIC falls below VALUE (repeatable)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="category landscape by sensitivity level")
    p.add_argument("--input", required=True, help="triple rows (predictions or gold)")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--output", help="plot data CSV")
    p.add_argument("--taxonomy")
    p.add_argument("--include-off-vocabulary", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("schema", help="print the structured-output schema")
    p.add_argument("--taxonomy")
    p.set_defaults(func=cmd_schema)

    p = sub.add_parser("prompt", help="print the request body for one input text")
    _add_prompt_args(p)
    p.add_argument("--backend", default="gpt-4o-mini")
    p.add_argument("--providers")
    p.add_argument("--text", help="input text (default: stdin)")
    p.set_defaults(func=cmd_prompt)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
