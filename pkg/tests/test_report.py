import csv
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from phigrade.corpus import Row
from phigrade.report import OTHER, emit_plot_data, format_table, plot_rows, stratify


def rows(spec):
    """spec: {(category, level): count}"""
    return [Row("r", "e", cat, level) for (cat, level), n in spec.items() for _ in range(n)]


def test_within_level_share():
    data = rows({("chief complaint", 2): 3536, ("medication name", 2): 11499 - 3536,
                 ("date", 3): 10})
    l2 = next(d for d in stratify(data) if d.level == 2)
    cat, n, share = l2.entries[1]
    assert (cat, n, l2.total) == ("chief complaint", 3536, 11499)
    assert share == pytest.approx(0.3075, abs=5e-5)


def test_single_triple():
    (d,) = stratify(rows({("special disease", 5): 1}))
    assert d.entries == (("special disease", 1, 1.0),) and d.other_count == 0


def test_top_k_and_other():
    (d,) = stratify(rows({("age", 3): 5, ("gender", 3): 3, ("date", 3): 2}), top_k=1)
    assert d.entries == (("age", 5, 0.5),)
    assert (d.other_count, d.other_share, d.categories) == (5, 0.5, 3)
    assert plot_rows([d])[-1] == (3, OTHER, 5, 0.5)


def test_invalid_top_k():
    with pytest.raises(ValueError):
        stratify([], top_k=0)


def test_plot_data(tmp_path):
    spec = {(f"c{i}", lv): i + lv for lv in range(1, 6) for i in range(14)}
    path = emit_plot_data(stratify(rows(spec)), tmp_path / "p.csv")
    with open(path, encoding="utf-8") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["level", "category", "count", "share"]
    assert len(table) - 1 <= 55
    assert path.read_bytes() == emit_plot_data(stratify(rows(spec)), tmp_path / "q.csv").read_bytes()
    empty = emit_plot_data([], tmp_path / "e.csv")
    assert empty.read_text(encoding="utf-8") == "level,category,count,share\n"


def test_format_table():
    text = format_table(stratify(rows({("age", 3): 2, ("gender", 3): 1}), top_k=1))
    assert "Level 3" in text and OTHER in text


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.tuples(st.sampled_from("abcdefghijkl"), st.integers(1, 5)),
                       st.integers(1, 30), max_size=40),
       st.integers(1, 6))
def test_conservation_and_order(spec, top_k):
    data = rows(spec)
    dists = stratify(data, top_k)
    assert sum(d.total for d in dists) == len(data)
    assert [d.level for d in dists] == sorted({lv for _, lv in spec})
    for d in dists:
        keys = [(-n, cat) for cat, n, _ in d.entries]
        assert keys == sorted(keys) and len(d.entries) <= top_k
        assert sum(n for _, n, _ in d.entries) + d.other_count == d.total
        counts = Counter({cat: n for (cat, lv), n in spec.items() if lv == d.level})
        if d.other_count:
            # nothing left out beats the last entry kept
            last = (-d.entries[-1][1], d.entries[-1][0])
            kept = {cat for cat, _, _ in d.entries}
            assert all((-n, c) > last for c, n in counts.items() if c not in kept)
