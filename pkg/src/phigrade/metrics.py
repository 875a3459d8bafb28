"""Sensitivity-aware extraction metrics: MCIF, MCCR, MSGR and max-level micro-F1.

Predicted items are compared with gold triples record by record. A record's
predicted set holds every distinct item the model emitted that passed the
validator except for its category, so off-vocabulary items count towards MCIF
and MCCR but can never be matched.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .pipeline import Item, RecordResult
from .taxonomy import Taxonomy, normalize
from .validator import Triple

HIGH_LEVELS = (3, 4, 5)


class MetricError(ValueError):
    """A metric is undefined on the given corpus (empty denominator)."""


@dataclass(frozen=True)
class GoldRecord:
    record_id: str
    gold_triples: tuple[Triple, ...]

    def __post_init__(self):
        if len({t.key for t in self.gold_triples}) != len(self.gold_triples):
            raise ValueError(f"gold record {self.record_id} has duplicate triples")


@dataclass
class MatchSet:
    record_id: str
    matched_pairs: list[tuple[Item, Item]] = field(default_factory=list)
    unmatched_gold: list[Item] = field(default_factory=list)
    unmatched_pred: list[Item] = field(default_factory=list)


@dataclass
class MetricsReport:
    mcif: float
    mccr: float
    msgr: float
    micro_f1: float
    per_record: list[dict] = field(default_factory=list)
    skipped: dict[str, int] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    # metrics whose denominator was empty; their value is NaN
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def value(name):
            return None if name in self.undefined else getattr(self, name)

        return {
            "mcif": value("mcif"),
            "mccr": value("mccr"),
            "msgr": value("msgr"),
            "micro_f1": value("micro_f1"),
            "undefined": list(self.undefined),
            "skipped": dict(self.skipped),
            "counts": dict(self.counts),
            "per_record": list(self.per_record),
        }

    def table(self) -> str:
        rows = [("MCIF", self.mcif), ("MCCR", self.mccr), ("MSGR", self.msgr),
                ("micro-F1", self.micro_f1)]
        lines = ["metric    value"] + [
            f"{name:<9} " + ("n/a" if math.isnan(value) else f"{value:.4f}") for name, value in rows]
        skipped = ", ".join(f"{k}={v}" for k, v in sorted(self.skipped.items()))
        lines.append(f"records   {self.counts.get('records', 0)}  (skipped: {skipped})")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# corpus preparation


class _Corpus:
    """Gold and predictions aligned by record id, canonicalised and de-duplicated."""

    def __init__(self, gold, predictions, taxonomy: Taxonomy):
        self.taxonomy = taxonomy
        gold = _as_mapping(gold)
        predictions = _as_mapping(predictions)
        ids = list(gold)
        ids += [rid for rid in predictions if rid not in gold]
        self.ids = ids
        self.gold = {rid: self._canon_gold(gold.get(rid, ())) for rid in ids}
        self.pred = {rid: self._canon_pred(predictions.get(rid, ())) for rid in ids}

    def _canon_gold(self, triples) -> list[Item]:
        out = {}
        for t in triples:
            item = Item(t.entity, self.taxonomy.canonical(t.category), int(t.level))
            out.setdefault(item, None)
        return list(out)

    def _canon_pred(self, items) -> list[tuple[Item, bool]]:
        out = {}
        for it in items:
            entity, category, level = it.entity, it.category, it.level
            ok = self.taxonomy.is_compatible(category)
            if ok:
                category = self.taxonomy.canonical(category)
            level = None if level is None else int(level)
            out.setdefault(Item(entity, category, level), ok)
        return list(out.items())


def _as_mapping(corpus) -> dict[str, list]:
    if isinstance(corpus, Mapping):
        return {str(k): list(v) for k, v in corpus.items()}
    out = {}
    for rec in corpus:
        if isinstance(rec, GoldRecord):
            out[rec.record_id] = list(rec.gold_triples)
        elif isinstance(rec, RecordResult):
            out[rec.record_id] = rec.items()
        else:
            raise TypeError(f"unsupported record type {type(rec).__name__}")
    return out


# ---------------------------------------------------------------------------
# matching


def _match_items(record_id: str, gold: Sequence[Item], pred: Sequence[Item]) -> MatchSet:
    """Injective matching on (normalised entity, category).

    Within one key, pairs with equal levels are formed first; leftovers are
    paired in ascending level order. The result does not depend on input order.
    """
    def key(it):
        return (normalize(it.entity), it.category)

    g_groups, p_groups = defaultdict(list), defaultdict(list)
    for i, g in enumerate(gold):
        g_groups[key(g)].append(i)
    for p in pred:
        p_groups[key(p)].append(p)

    partner: dict[int, Item] = {}
    used_pred: set[Item] = set()
    for k, g_idx in g_groups.items():
        candidates = sorted(p_groups.get(k, ()), key=_level_key)
        g_idx = sorted(g_idx, key=lambda i: _level_key(gold[i]))
        free = []
        for i in g_idx:
            hit = next((p for p in candidates if p.level == gold[i].level and p not in used_pred), None)
            if hit is None:
                free.append(i)
            else:
                partner[i] = hit
                used_pred.add(hit)
        rest = [p for p in candidates if p not in used_pred]
        for i, p in zip(free, rest):
            partner[i] = p
            used_pred.add(p)

    ms = MatchSet(record_id)
    for i, g in enumerate(gold):
        if i in partner:
            ms.matched_pairs.append((g, partner[i]))
        else:
            ms.unmatched_gold.append(g)
    ms.unmatched_pred = [p for p in pred if p not in used_pred]
    return ms


def _level_key(it: Item):
    return (it.level is None, it.level or 0, it.entity)


def match_triples(gold: GoldRecord, predicted: RecordResult, taxonomy: Taxonomy) -> MatchSet:
    corpus = _Corpus([gold], [predicted], taxonomy)
    rid = gold.record_id
    pred = [it for it, ok in corpus.pred[rid] if ok]
    ms = _match_items(rid, corpus.gold[rid], pred)
    ms.unmatched_pred += [it for it, ok in corpus.pred[rid] if not ok]
    return ms


# ---------------------------------------------------------------------------
# metrics


def _mcif(c: _Corpus, skipped: dict) -> float:
    ratios = []
    for rid in c.ids:
        if not c.gold[rid]:
            skipped["mcif"] = skipped.get("mcif", 0) + 1
            continue
        ratios.append(len(c.pred[rid]) / len(c.gold[rid]))
    if not ratios:
        raise MetricError("MCIF undefined: every gold record is empty")
    return sum(ratios) / len(ratios)


def _mccr(c: _Corpus, skipped: dict) -> float:
    rates = []
    for rid in c.ids:
        pred = c.pred[rid]
        if not pred:
            skipped["mccr"] = skipped.get("mccr", 0) + 1
            continue
        rates.append(sum(ok for _, ok in pred) / len(pred))
    if not rates:
        raise MetricError("MCCR undefined: no predicted items anywhere")
    return sum(rates) / len(rates)


def _matches(c: _Corpus) -> dict[str, MatchSet]:
    return {rid: _match_items(rid, c.gold[rid], [it for it, ok in c.pred[rid] if ok])
            for rid in c.ids}


def _msgr(matches: Mapping[str, MatchSet]) -> tuple[float, int]:
    correct = total = 0
    for ms in matches.values():
        for g, p in ms.matched_pairs:
            if g.level in HIGH_LEVELS or p.level in HIGH_LEVELS:
                total += 1
                correct += g.level == p.level
    if total == 0:
        raise MetricError("MSGR undefined: no matched pair at level 3-5")
    return correct / total, total


def _max_levels(c: _Corpus, rid: str):
    gold_max = max((g.level for g in c.gold[rid]), default=None)
    pred_max = max((it.level for it, ok in c.pred[rid] if ok and it.level is not None), default=None)
    return gold_max, pred_max


def _micro_f1(c: _Corpus, skipped: dict) -> float:
    tp = fp = fn = 0
    seen = 0
    for rid in c.ids:
        gold_max, pred_max = _max_levels(c, rid)
        if gold_max is None:
            skipped["micro_f1"] = skipped.get("micro_f1", 0) + 1
            continue
        seen += 1
        if pred_max is None:
            fn += 1
        elif pred_max == gold_max:
            tp += 1
        else:
            fp += 1
            fn += 1
    if seen == 0:
        raise MetricError("micro-F1 undefined: no record has gold triples")
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def mcif(gold, predictions, taxonomy: Taxonomy) -> float:
    return _mcif(_Corpus(gold, predictions, taxonomy), {})


def mccr(gold, predictions, taxonomy: Taxonomy) -> float:
    return _mccr(_Corpus(gold, predictions, taxonomy), {})


def msgr(gold, predictions, taxonomy: Taxonomy) -> float:
    return _msgr(_matches(_Corpus(gold, predictions, taxonomy)))[0]


def micro_f1_max_level(gold, predictions, taxonomy: Taxonomy) -> float:
    return _micro_f1(_Corpus(gold, predictions, taxonomy), {})


def evaluate(gold, predictions, taxonomy: Taxonomy) -> MetricsReport:
    """All four metrics plus per-record diagnostics.

    ``gold`` and ``predictions`` are mappings record id -> items (or sequences of
    GoldRecord / RecordResult). Records absent on one side count as empty there.
    A metric with an empty denominator is NaN and listed in ``undefined``.
    """
    c = _Corpus(gold, predictions, taxonomy)
    skipped = {"mcif": 0, "mccr": 0, "micro_f1": 0}
    undefined = []

    def guarded(name, fn, *args):
        try:
            return fn(*args)
        except MetricError:
            undefined.append(name)
            return math.nan

    mcif_v = guarded("mcif", _mcif, c, skipped)
    mccr_v = guarded("mccr", _mccr, c, skipped)
    matches = _matches(c)
    msgr_v = guarded("msgr", lambda: _msgr(matches)[0])
    graded = sum(1 for ms in matches.values() for g, p in ms.matched_pairs
                 if g.level in HIGH_LEVELS or p.level in HIGH_LEVELS)
    f1 = guarded("micro_f1", _micro_f1, c, skipped)
    per_record = []
    for rid in c.ids:
        gold_max, pred_max = _max_levels(c, rid)
        per_record.append({
            "record_id": rid,
            "gold": len(c.gold[rid]),
            "predicted": len(c.pred[rid]),
            "compatible": sum(ok for _, ok in c.pred[rid]),
            "matched": len(matches[rid].matched_pairs),
            "gold_max_level": gold_max,
            "pred_max_level": pred_max,
        })
    counts = {"records": len(c.ids), "graded_pairs": graded,
              "gold_triples": sum(len(v) for v in c.gold.values()),
              "predicted_items": sum(len(v) for v in c.pred.values())}
    return MetricsReport(mcif_v, mccr_v, msgr_v, f1, per_record, skipped, counts, tuple(undefined))


def check_floors(report: MetricsReport, floors: Mapping[str, float]) -> list[str]:
    """Names of metrics that fall below their configured floor (undefined counts as below)."""
    values = {"mcif": report.mcif, "mccr": report.mccr, "msgr": report.msgr,
              "micro_f1": report.micro_f1}
    return [name for name, floor in floors.items()
            if math.isnan(values[name]) or values[name] < floor]


def items_by_record(rows: Iterable) -> dict[str, list[Item]]:
    out: dict[str, list[Item]] = defaultdict(list)
    for row in rows:
        out[row.record_id].append(Item(row.entity, row.category, row.level))
    return dict(out)
