"""Audit and solve every built-in problem; print a summary table.

    python3 scripts/run_corpus.py [--out DIR]

Each problem's outputs land in DIR/<name>/ (default: $BVP_OUT or ./corpus_runs).
"""

import argparse
import contextlib
import io
import os
from pathlib import Path

from monobvp import corpus
from monobvp.cli import run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.environ.get("BVP_OUT", "corpus_runs"))
    args = ap.parse_args()
    root = Path(args.out)
    print(f"{'problem':20s} {'expected':>8s} {'exit':>5s}  note")
    mismatches = 0
    for entry in corpus.corpus_list():
        name = entry["name"]
        with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
            code = run(["solve", name, "--out", str(root / name)])
        mismatches += code != entry["expected_exit"]
        print(f"{name:20s} {entry['expected_exit']:>8d} {code:>5d}  {entry['note']}")
    print(f"\n{mismatches} mismatch(es); outputs under {root}/")
    return 1 if mismatches else 0


if __name__ == "__main__":
    raise SystemExit(main())
