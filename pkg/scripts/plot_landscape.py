"""Bar charts of the per-level category landscape from `phigrade report` output.

    phigrade report --input predictions.jsonl --output plot.csv
    python scripts/plot_landscape.py plot.csv landscape.png

Needs matplotlib (pip install 'phigrade[plot]').
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("plot_csv")
    ap.add_argument("image")
    args = ap.parse_args()

    by_level = defaultdict(list)
    with open(args.plot_csv, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            by_level[int(row["level"])].append((row["category"], float(row["share"])))
    levels = sorted(by_level)
    if not levels:
        raise SystemExit("no rows to plot")
    fig, axes = plt.subplots(len(levels), 1, figsize=(8, 2.6 * len(levels)), squeeze=False)
    for ax, level in zip(axes[:, 0], levels):
        cats, shares = zip(*by_level[level])
        ax.barh(range(len(cats)), [s * 100 for s in shares])
        ax.set_yticks(range(len(cats)), cats, fontsize=8)
        ax.invert_yaxis()
        ax.set_title(f"Level {level}", fontsize=10)
        ax.set_xlabel("share within level (%)", fontsize=8)
    fig.tight_layout()
    fig.savefig(args.image, dpi=150)


if __name__ == "__main__":
    main()
