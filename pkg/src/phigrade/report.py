"""Category landscape per sensitivity level (counts, within-level shares, top-k)."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

OTHER = "other"
PLOT_COLUMNS = ("level", "category", "count", "share")


@dataclass(frozen=True)
class LevelDistribution:
    level: int
    entries: tuple[tuple[str, int, float], ...]
    total: int
    other_count: int = 0
    other_share: float = 0.0
    categories: int = field(default=0)


def stratify(rows: Iterable, top_k: int = 10) -> list[LevelDistribution]:
    """Count (category, level) occurrences; one distribution per level present.

    ``rows`` are objects with ``category`` and ``level`` attributes (triples or
    file rows); rows without a level are ignored. Entries are ordered by count
    descending, category ascending; whatever falls outside the top ``top_k`` is
    folded into the ``other`` remainder.
    """
    if top_k < 1:
        raise ValueError("top_k must be positive")
    by_level: dict[int, Counter] = {}
    for row in rows:
        if row.level is None:
            continue
        by_level.setdefault(int(row.level), Counter())[row.category] += 1
    out = []
    for level in sorted(by_level):
        counts = by_level[level]
        total = sum(counts.values())
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        top = tuple((cat, n, n / total) for cat, n in ranked[:top_k])
        rest = sum(n for _, n in ranked[top_k:])
        out.append(LevelDistribution(level, top, total, rest, rest / total, len(counts)))
    return out


def plot_rows(distributions: Iterable[LevelDistribution]) -> list[tuple]:
    rows = []
    for d in distributions:
        for cat, n, share in d.entries:
            rows.append((d.level, cat, n, share))
        if d.other_count:
            rows.append((d.level, OTHER, d.other_count, d.other_share))
    return rows


def emit_plot_data(distributions: Iterable[LevelDistribution], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        for level, cat, n, share in plot_rows(distributions):
            writer.writerow([level, cat, n, f"{share:.6f}"])
    return path


def format_table(distributions: Iterable[LevelDistribution]) -> str:
    lines = []
    for d in distributions:
        lines.append(f"Level {d.level}  (n={d.total}, {d.categories} categories)")
        for cat, n, share in d.entries:
            lines.append(f"  {cat:<32} {n:>7} {share:7.2%}")
        if d.other_count:
            lines.append(f"  {OTHER:<32} {d.other_count:>7} {d.other_share:7.2%}")
    return "\n".join(lines)
