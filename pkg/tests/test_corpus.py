import csv
import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from phigrade import corpus
from phigrade.corpus import CorpusError, NamePool, Row, fill_names, read_corpus, read_rows
from phigrade.pipeline import ConsultationRecord, RecordResult
from phigrade.validator import Rejection, Triple

GOLDEN = Path(__file__).parent / "golden"
PLACEHOLDER_RECORDS = [
    ConsultationRecord("p0", "我叫***，今年30岁。"),
    ConsultationRecord("p1", "患者XXX，家属***陪同。"),
    ConsultationRecord("p2", "没有占位符的记录。"),
    ConsultationRecord("p3", "***医生说***需要复查，×××也同意。"),
]


def _write_table(path, header, rows):
    if path.suffix == ".xlsx":
        from openpyxl import Workbook
        wb = Workbook()
        wb.active.append(header)
        for r in rows:
            wb.active.append(r)
        wb.save(path)
    elif path.suffix == ".jsonl":
        path.write_text("".join(json.dumps(dict(zip(header, r)), ensure_ascii=False) + "\n"
                                for r in rows), encoding="utf-8")
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t" if path.suffix == ".tsv" else ",")
            w.writerow(header)
            w.writerows(rows)


@pytest.mark.parametrize("suffix", [".jsonl", ".csv", ".tsv", ".xlsx"])
def test_read_corpus_formats(tmp_path, suffix):
    path = tmp_path / f"in{suffix}"
    _write_table(path, ["id", "Description", "dept"],
                 [["a", "头痛三天。", "内科"], ["b", "  ", "外科"], ["", "咳嗽。", "内科"]])
    records = read_corpus(path, id_column="id")
    assert [r.record_id for r in records] == ["a", "b", "2"]
    assert [r.description for r in records] == ["头痛三天。", "", "咳嗽。"]
    assert records[0].metadata == {"dept": "内科"}


def test_missing_description_column(tmp_path):
    path = tmp_path / "in.csv"
    _write_table(path, ["id", "text"], [["a", "x"]])
    with pytest.raises(CorpusError, match=r"available: \['id', 'text'\]"):
        read_corpus(path)
    with pytest.raises(CorpusError):
        read_corpus(tmp_path / "absent.csv")
    with pytest.raises(CorpusError):
        read_corpus(path, fmt="parquet")


def test_benchmark_fixture(benchmark):
    records, gold = benchmark
    assert len(records) == 1000
    assert len({r.record_id for r in records}) == 1000


def test_write_corpus_round_trip(tmp_path):
    path = tmp_path / "c.jsonl"
    corpus.write_corpus(PLACEHOLDER_RECORDS, path)
    assert read_corpus(path) == PLACEHOLDER_RECORDS


def test_fill_names_golden():
    pool = NamePool.generate(2020)
    filled = fill_names(PLACEHOLDER_RECORDS, pool)
    expected = [json.loads(line) for line in
                (GOLDEN / "fill_names.jsonl").read_text(encoding="utf-8").splitlines()]
    assert [{"record_id": r.record_id, "Description": r.description} for r in filled] == expected
    assert filled[2] is PLACEHOLDER_RECORDS[2]
    assert fill_names(PLACEHOLDER_RECORDS, NamePool.generate(2020)) == filled


def test_fill_names_distinct_in_order():
    pool = NamePool.generate(7)
    (record,) = fill_names([ConsultationRecord("r", "***和***")], pool)
    first, second = record.description.split("和")
    assert first != second and first in pool.names and second in pool.names
    # a record's draw does not depend on its neighbours
    again = fill_names([ConsultationRecord("r", "***和***"), ConsultationRecord("s", "***")], pool)
    assert again[0] == record


def test_name_pool():
    a, b = NamePool.generate(1), NamePool.generate(1)
    assert a == b and len(set(a.names)) == 500
    assert NamePool.generate(2).names != a.names
    with pytest.raises(ValueError):
        fill_names(PLACEHOLDER_RECORDS, NamePool(0, ()))


def _results():
    return [RecordResult("a", [Triple("张伟", "patient name", 4, ("r1", "r2")),
                               Triple("头痛", "chief complaint", 2), Triple("35岁", "age", 3)],
                         rejections=[Rejection({"entity": "x", "category": "symptom", "level": 9},
                                               "bad_category")]),
            RecordResult("b", [Triple("高血压", "disease", 2), Triple("王", "gender", 3),
                               Triple("2020年", "year", 2)]),
            RecordResult("c", failed=True, error="boom")]


@pytest.mark.parametrize("suffix", [".jsonl", ".csv", ".tsv", ".xlsx"])
def test_write_results_round_trip(tmp_path, suffix, taxonomy):
    path = tmp_path / f"out{suffix}"
    corpus.write_results(_results(), path, taxonomy=taxonomy)
    rows = read_rows(path)
    assert len(rows) == 7                       # 2 x 3 triples + 1 off-vocabulary item
    assert rows[0] == Row("a", "张伟", "patient name", 4, ("r1", "r2"), "患者姓名")
    assert rows[3] == Row("a", "x", "symptom", None)


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_empty_results(tmp_path, suffix):
    path = corpus.write_results([], tmp_path / f"e{suffix}")
    text = path.read_text(encoding="utf-8")
    assert text == (",".join(corpus.COLUMNS) + "\n" if suffix == ".csv" else "")
    assert read_rows(path) == []


def test_read_gold(tmp_path, taxonomy):
    path = tmp_path / "g.jsonl"
    corpus.write_rows([Row("a", "张伟", "Patient Name", 4)], path)
    assert corpus.read_gold(path, taxonomy) == {"a": [Triple("张伟", "patient name", 4)]}
    corpus.write_rows([Row("a", "张伟", "nope", 4)], path)
    with pytest.raises(CorpusError):
        corpus.read_gold(path, taxonomy)


entities = st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=12) \
    .filter(lambda s: s.strip())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(entities, st.sampled_from(["age", "disease", "patient name"]),
                          st.integers(1, 5)), max_size=8),
       st.sampled_from([".jsonl", ".csv"]))
def test_round_trip_property(tmp_path_factory, items, suffix):
    triples = {Triple(e, c, l).key: Triple(e, c, l) for e, c, l in items}
    results = [RecordResult("r", list(triples.values()))]
    path = tmp_path_factory.mktemp("rt") / f"o{suffix}"
    corpus.write_results(results, path)
    back = sorted((r.entity, r.category, r.level) for r in read_rows(path))
    assert back == sorted(triples)
