"""Run every shipped scenario config and write report.json / series.csv per scenario.

    python3 scripts/run_all_scenarios.py --out-dir out/all [--jobs 2] [--skip collapsing_torus]
"""
import argparse
import sys
import time
from pathlib import Path

from rfcollapse.config import parse_config
from rfcollapse.scenarios import run_scenario

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
NAMES = ["family_convergence", "nil_scaling", "collapsing_torus"]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="out/all")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--skip", nargs="*", default=[])
    args = p.parse_args(argv)
    failed = []
    for name in NAMES:
        if name in args.skip:
            continue
        start = time.perf_counter()
        rep = run_scenario(parse_config(CONFIGS / f"{name}.yaml"), jobs=args.jobs)
        out = Path(args.out_dir) / name
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(rep.to_json())
        (out / "series.csv").write_text(rep.series_csv())
        print("\n".join(rep.summary_lines()))
        print(f"  ({time.perf_counter() - start:.1f} s)")
        if not rep.passed:
            failed.append(name)
    if failed:
        print("failed:", ", ".join(failed))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
