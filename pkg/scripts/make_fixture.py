"""Write the synthetic 1,000-record benchmark (records + gold triples).

    python scripts/make_fixture.py --out tests/fixtures
"""

import argparse
from pathlib import Path

from phigrade import corpus, synth
from phigrade.taxonomy import load_taxonomy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/fixtures")
    ap.add_argument("-n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2020)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    taxonomy = load_taxonomy()
    records, gold = synth.generate(args.n, args.seed, taxonomy=taxonomy)
    corpus.write_corpus(records, out / "benchmark.jsonl")
    rows = [row for r in records for row in corpus.triple_rows(r.record_id, gold[r.record_id], taxonomy)]
    corpus.write_rows(rows, out / "gold.jsonl")
    print(f"{len(records)} records, {len(rows)} gold triples -> {out}")


if __name__ == "__main__":
    main()
