"""Reading consultation records and reading/writing triple rows.

JSON lines is the canonical interchange format; CSV and .xlsx are supported for
spreadsheet workflows. Prediction and gold files share one row layout.
"""

from __future__ import annotations

import csv
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .pipeline import ConsultationRecord, RecordResult
from .taxonomy import Taxonomy
from .validator import Triple

COLUMNS = ("record_id", "entity", "category", "level", "rules_fired", "category_label")
DEFAULT_PLACEHOLDERS = (r"\*{2,}", r"[Xx×]{3}")

_FORMATS = {".jsonl": "jsonl", ".json": "jsonl", ".csv": "csv", ".tsv": "tsv", ".xlsx": "xlsx"}


class CorpusError(ValueError):
    pass


def detect_format(path: str | Path, fmt: str | None = None) -> str:
    if fmt:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix not in _FORMATS:
        raise CorpusError(f"cannot infer format from {path}; pass fmt explicitly")
    return _FORMATS[suffix]


def _read_table(path: Path, fmt: str) -> tuple[list[str], list[dict]]:
    if fmt == "jsonl":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        rows.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise CorpusError(f"{path}:{lineno}: {exc.msg}") from None
        columns = list(dict.fromkeys(k for r in rows for k in r))
        return columns, rows
    if fmt in ("csv", "tsv"):
        with open(path, encoding="utf-8-sig", newline="") as fh:
            reader = csv.DictReader(fh, delimiter="\t" if fmt == "tsv" else ",")
            rows = list(reader)
            return list(reader.fieldnames or []), rows
    if fmt == "xlsx":
        from openpyxl import load_workbook

        wb = load_workbook(path, read_only=True, data_only=True)
        it = wb.active.iter_rows(values_only=True)
        header = [str(h) if h is not None else "" for h in next(it, ())]
        rows = [dict(zip(header, values)) for values in it
                if any(v is not None for v in values)]
        wb.close()
        return header, rows
    raise CorpusError(f"unsupported format {fmt!r}")


def read_corpus(path: str | Path, fmt: str | None = None, id_column: str = "record_id",
                description_column: str = "Description") -> list[ConsultationRecord]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    columns, rows = _read_table(path, detect_format(path, fmt))
    if description_column not in columns:
        raise CorpusError(f"{path}: no {description_column!r} column; available: {columns}")
    records = []
    for i, row in enumerate(rows):
        rid = row.get(id_column)
        rid = str(i) if rid is None or str(rid).strip() == "" else str(rid)
        text = row.get(description_column)
        text = "" if text is None or not str(text).strip() else str(text)
        meta = {k: v for k, v in row.items() if k not in (id_column, description_column)}
        records.append(ConsultationRecord(rid, text, meta))
    return records


def write_corpus(records: Sequence[ConsultationRecord], path: str | Path,
                 description_column: str = "Description"):
    """Write records as JSON lines (record_id, Description, metadata...)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            row = {"record_id": r.record_id, description_column: r.description, **r.metadata}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# synthetic names

_SURNAMES = "王李张刘陈杨黄赵吴周徐孙马朱胡郭何高林罗郑梁谢宋唐许韩冯邓曹彭曾肖田董袁潘于蒋蔡余杜叶程苏魏吕丁任沈姚卢姜崔钟谭陆汪范金石廖贾夏韦付方白邹孟熊秦邱江尹薛闫段雷侯龙史陶黎贺顾毛郝龚邵万钱严覃武戴莫孔向汤"
_GIVEN = "伟芳娜敏静丽强磊军洋勇艳杰娟涛明超秀霞平刚桂英华玉兰萍红鹏辉建国文斌宇浩凯健俊帆帅旭宁龙林欣怡佳颖雪琳晨阳倩婷思雨子涵梓轩一诺嘉欣"


@dataclass(frozen=True)
class NamePool:
    seed: int
    names: tuple[str, ...] = field(default=())

    @classmethod
    def generate(cls, seed: int, size: int = 500) -> "NamePool":
        rng = random.Random(seed)
        names = []
        seen = set()
        while len(names) < size:
            given = "".join(rng.choice(_GIVEN) for _ in range(rng.choice((1, 2, 2))))
            name = rng.choice(_SURNAMES) + given
            if name not in seen:
                seen.add(name)
                names.append(name)
        return cls(seed, tuple(names))


def fill_names(records: Sequence[ConsultationRecord], pool: NamePool,
               placeholder_patterns: Iterable[str] = DEFAULT_PLACEHOLDERS) -> list[ConsultationRecord]:
    """Replace de-identification placeholders with names drawn from ``pool``.

    Draws are keyed by (seed, record index), so a record's names do not depend
    on any other record. Placeholders within a record get distinct names, in order.
    """
    if not pool.names:
        raise ValueError("name pool is empty")
    regex = re.compile("|".join(f"(?:{p})" for p in placeholder_patterns))
    out = []
    for i, record in enumerate(records):
        hits = list(regex.finditer(record.description))
        if not hits:
            out.append(record)
            continue
        rng = random.Random(f"{pool.seed}:{i}")
        if len(hits) <= len(pool.names):
            names = rng.sample(pool.names, len(hits))
        else:
            names = [rng.choice(pool.names) for _ in hits]
        draw = iter(names)
        text = regex.sub(lambda m: next(draw), record.description)
        out.append(ConsultationRecord(record.record_id, text, record.metadata))
    return out


# ---------------------------------------------------------------------------
# triple rows


@dataclass(frozen=True)
class Row:
    record_id: str
    entity: str
    category: str
    level: int | None
    rules_fired: tuple[str, ...] = ()
    category_label: str = ""


def result_rows(results: Iterable[RecordResult], taxonomy: Taxonomy | None = None) -> list[Row]:
    rows = []
    for r in results:
        if r.failed:
            continue
        for t in r.triples:
            label = taxonomy.label(t.category) if taxonomy is not None else ""
            rows.append(Row(r.record_id, t.entity, t.category, int(t.level), t.rules_fired, label))
        for it in r.off_vocabulary_items():
            rows.append(Row(r.record_id, it.entity, it.category, it.level))
    return rows


def triple_rows(record_id: str, triples: Iterable[Triple], taxonomy: Taxonomy | None = None) -> list[Row]:
    return [Row(record_id, t.entity, t.category, int(t.level), t.rules_fired,
                taxonomy.label(t.category) if taxonomy is not None else "")
            for t in triples]


def _row_dict(row: Row) -> dict:
    return {"record_id": row.record_id, "entity": row.entity, "category": row.category,
            "level": row.level, "rules_fired": list(row.rules_fired),
            "category_label": row.category_label}


def write_rows(rows: Sequence[Row], path: str | Path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = detect_format(path, fmt)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(_row_dict(row), ensure_ascii=False) + "\n")
    elif fmt in ("csv", "tsv"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in rows:
                writer.writerow([row.record_id, row.entity, row.category,
                                 "" if row.level is None else row.level,
                                 "|".join(row.rules_fired), row.category_label])
    elif fmt == "xlsx":
        from openpyxl import Workbook

        wb = Workbook()
        ws = wb.active
        ws.title = "triples"
        ws.append(COLUMNS)
        for row in rows:
            ws.append([row.record_id, row.entity, row.category, row.level,
                       "|".join(row.rules_fired), row.category_label])
        wb.save(path)
    else:
        raise CorpusError(f"unsupported format {fmt!r}")
    return path


def write_results(results: Sequence[RecordResult], path: str | Path, fmt: str | None = None,
                  taxonomy: Taxonomy | None = None) -> Path:
    return write_rows(result_rows(results, taxonomy), path, fmt)


def _parse_level(value):
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        raise CorpusError(f"bad level {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise CorpusError(f"bad level {value!r}") from None


def read_rows(path: str | Path, fmt: str | None = None) -> list[Row]:
    path = Path(path)
    fmt = detect_format(path, fmt)
    columns, raw = _read_table(path, fmt)
    missing = [c for c in COLUMNS[:4] if c not in columns] if raw else []
    if missing:
        raise CorpusError(f"{path}: missing columns {missing}")
    rows = []
    for r in raw:
        fired = r.get("rules_fired") or ()
        if isinstance(fired, str):
            fired = tuple(x for x in fired.split("|") if x)
        rows.append(Row(str(r["record_id"]), str(r["entity"]), str(r["category"]),
                        _parse_level(r["level"]), tuple(fired), str(r.get("category_label") or "")))
    return rows


def read_gold(path: str | Path, taxonomy: Taxonomy, fmt: str | None = None) -> dict[str, list[Triple]]:
    """Gold triples by record id; every row must be a valid triple."""
    gold: dict[str, list[Triple]] = {}
    for row in read_rows(path, fmt):
        if not taxonomy.is_compatible(row.category) or row.level is None:
            raise CorpusError(f"invalid gold row {row}")
        t = Triple(row.entity, taxonomy.canonical(row.category), row.level)
        gold.setdefault(row.record_id, []).append(t)
    return gold
