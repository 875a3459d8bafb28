"""Per-record orchestration: chunk, complete, validate, override, merge, sort."""

from __future__ import annotations

import bisect
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .backend import BackendError, fingerprint
from .prompt import PromptBundle, dump_triples, render_messages
from .rules import RuleDecision, RulePack, apply_rules
from .taxonomy import SensitivityLevel, Taxonomy
from .validator import BAD_CATEGORY, Rejection, Triple, parse_and_validate

log = logging.getLogger(__name__)

DEFAULT_MAX_CHUNK_CHARS = 4000
DEFAULT_OVERLAP_CHARS = 200

_SENTENCE_END = re.compile(r"[。！？!?\n]")


@dataclass(frozen=True)
class ConsultationRecord:
    record_id: str
    description: str
    metadata: Mapping = field(default_factory=dict)


class Item(NamedTuple):
    """A predicted item as seen by the metrics: category may be off-vocabulary."""

    entity: str
    category: str
    level: int | None


@dataclass
class RecordResult:
    record_id: str
    triples: list[Triple] = field(default_factory=list)
    rule_decisions: list[RuleDecision] = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)
    chunk_count: int = 0
    parse_failures: int = 0
    failed: bool = False
    error: str | None = None

    @property
    def max_level(self) -> SensitivityLevel | None:
        return max((t.level for t in self.triples), default=None)

    @property
    def rejection_count(self) -> int:
        return len(self.rejections)

    def off_vocabulary_items(self) -> list[Item]:
        """Distinct items rejected only for their category."""
        seen = {}
        for r in self.rejections:
            if r.reason != BAD_CATEGORY:
                continue
            level = r.item["level"]
            if isinstance(level, bool) or not isinstance(level, int) or not 1 <= level <= 5:
                level = None
            category = r.item["category"]
            if not isinstance(category, str):
                category = json.dumps(category, ensure_ascii=False)
            item = Item(r.item["entity"], category, level)
            seen.setdefault(item, None)
        return list(seen)

    def items(self) -> list[Item]:
        return [Item(t.entity, t.category, int(t.level)) for t in self.triples] \
            + self.off_vocabulary_items()


def chunk_spans(description: str, max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
                overlap_chars: int = DEFAULT_OVERLAP_CHARS) -> list[tuple[int, int]]:
    """(start, end) offsets of overlapping chunks, cut at sentence ends when possible."""
    if max_chunk_chars <= overlap_chars or overlap_chars < 0:
        raise ValueError("need max_chunk_chars > overlap_chars >= 0")
    n = len(description)
    if n == 0:
        return []
    bounds = [m.end() for m in _SENTENCE_END.finditer(description)]
    spans = []
    start = 0
    while n - start > max_chunk_chars:
        limit = start + max_chunk_chars
        i = bisect.bisect_right(bounds, limit) - 1
        end = bounds[i] if i >= 0 and bounds[i] > start + overlap_chars else limit
        spans.append((start, end))
        j = bisect.bisect_left(bounds, end - overlap_chars)
        nxt = bounds[j] if j < len(bounds) and bounds[j] < end else end - overlap_chars
        start = max(nxt, start + 1)
    spans.append((start, n))
    return spans


def chunk(description: str, max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
          overlap_chars: int = DEFAULT_OVERLAP_CHARS) -> list[str]:
    return [description[a:b] for a, b in chunk_spans(description, max_chunk_chars, overlap_chars)]


def sort_triples(triples) -> list[Triple]:
    return sorted(triples, key=lambda t: (-t.level, t.entity, t.category))


def merge_triples(triples) -> list[Triple]:
    """Exact de-duplication on (entity, category, level); fired rule ids are unioned."""
    merged: dict[tuple, Triple] = {}
    for t in triples:
        prev = merged.get(t.key)
        if prev is None:
            merged[t.key] = t
        elif t.rules_fired:
            fired = tuple(dict.fromkeys(prev.rules_fired + t.rules_fired))
            merged[t.key] = Triple(t.entity, t.category, t.level, fired)
    return sort_triples(merged.values())


def process_record(record: ConsultationRecord, bundle: PromptBundle, backend,
                   pack: RulePack | None, taxonomy: Taxonomy,
                   max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
                   overlap_chars: int = DEFAULT_OVERLAP_CHARS) -> RecordResult:
    use_rules = pack is not None and bundle.ablation.rules
    chunks = chunk(record.description, max_chunk_chars, overlap_chars)
    result = RecordResult(record.record_id, chunk_count=len(chunks))
    collected = []
    try:
        for text in chunks:
            completion = backend.complete(render_messages(bundle, text), bundle.output_schema)
            outcome = parse_and_validate(completion.raw_text, taxonomy)
            result.rejections.extend(outcome.rejected)
            result.parse_failures += outcome.parse_failed
            for triple in outcome.accepted:
                if use_rules:
                    decision = apply_rules(triple, text, pack)
                    if decision.fired_rule_ids:
                        result.rule_decisions.append(decision)
                    triple = decision.triple_after
                collected.append(triple)
    except BackendError as exc:
        log.warning("record %s failed: %s", record.record_id, exc)
        return RecordResult(record.record_id, chunk_count=len(chunks), failed=True,
                            error=f"{type(exc).__name__}: {exc}")
    result.triples = merge_triples(collected)
    return result


def process_corpus(records: Sequence[ConsultationRecord], bundle: PromptBundle, backend,
                   pack: RulePack | None, taxonomy: Taxonomy,
                   max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
                   overlap_chars: int = DEFAULT_OVERLAP_CHARS,
                   max_workers: int | None = None) -> list[RecordResult]:
    ids = [r.record_id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("record ids must be unique")
    if not records:
        return []
    workers = max_workers or getattr(backend, "max_in_flight", 1)

    def run(record):
        return process_record(record, bundle, backend, pack, taxonomy,
                              max_chunk_chars, overlap_chars)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, records))
    summary = summarize(results)
    log.info("processed %(records)d records: %(failed)d failed, %(triples)d triples, "
             "%(rejections)d rejected items", summary)
    for r in results:
        if r.failed:
            log.info("failed record %s: %s", r.record_id, r.error)
    return results


def summarize(results: Sequence[RecordResult]) -> dict:
    return {
        "records": len(results),
        "failed": sum(r.failed for r in results),
        "failed_ids": [r.record_id for r in results if r.failed],
        "triples": sum(len(r.triples) for r in results),
        "rejections": sum(r.rejection_count for r in results),
        "parse_failures": sum(r.parse_failures for r in results),
        "rule_decisions": sum(len(r.rule_decisions) for r in results),
    }


def replay_table_from_gold(records: Sequence[ConsultationRecord],
                           gold: Mapping[str, Sequence[Triple]],
                           max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
                           overlap_chars: int = DEFAULT_OVERLAP_CHARS) -> dict[str, str]:
    """Canned answers that make a stub backend reproduce ``gold`` exactly.

    Each gold triple is answered by every chunk that contains its entity (or by
    the first chunk when none does); merging across chunks restores the set.
    """
    table: dict[str, str] = {}
    for record in records:
        chunks = chunk(record.description, max_chunk_chars, overlap_chars)
        if not chunks:
            continue
        per_chunk = [[] for _ in chunks]
        for t in gold.get(record.record_id, ()):
            hits = [i for i, c in enumerate(chunks) if t.entity in c] or [0]
            for i in hits:
                per_chunk[i].append(t)
        for text, triples in zip(chunks, per_chunk):
            key = fingerprint(text)
            answer = dump_triples(sort_triples(triples))
            if table.get(key, answer) != answer:
                raise ValueError(f"conflicting replay answers for identical text in {record.record_id}")
            table[key] = answer
    return table
