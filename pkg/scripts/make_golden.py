"""Regenerate the ablation golden files under tests/golden/.

Each file holds the request body sent for a probe consultation and the rule
decisions the pipeline recorded for it, for one ablation preset.

    python scripts/make_golden.py
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from ablation_probe import probe_run  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/golden")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, payload in probe_run().items():
        path = out / f"run_{name}.json"
        path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
