"""Run every JSON config in scripts/configs and print one status line each.

    python3 scripts/run_configs.py [--out DIR]
"""

import argparse
import glob
import os
import sys

from gromlab.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))


def run_all(out: str) -> int:
    worst = 0
    for path in sorted(glob.glob(os.path.join(HERE, "configs", "*.json"))):
        code = main(["run", "--config", path, "--out", out])
        expected = 1 if "mutated" in os.path.basename(path) else 0
        print(f"{os.path.basename(path):<36} exit {code} (expected {expected})", file=sys.stderr)
        worst = max(worst, int(code != expected))
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="gromlab-out")
    sys.exit(run_all(ap.parse_args().out))
