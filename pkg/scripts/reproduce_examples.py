"""Run every bundled example end to end and write reports under an output directory.

    python3 scripts/reproduce_examples.py [--out out] [--repeats 5]
"""
import argparse
import json
from pathlib import Path

from koopman_uq.pipeline import BENCHMARKS, benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--repeats", type=int, default=None)
    args = ap.parse_args()
    summary = {}
    for example in BENCHMARKS:
        reports, passed = benchmark(example, args.out, args.repeats)
        summary[example] = {"passed": passed, "reports": reports}
        for rep in reports:
            print(f"{rep['example']:10s} max_error={rep['max_error']:.4f} "
                  f"speedup={rep['speedup']:.0f}x (without KDE {rep['speedup_without_kde']:.0f}x) "
                  f"checks={rep['checks']}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
