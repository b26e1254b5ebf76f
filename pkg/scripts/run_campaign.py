"""Batch verification of the income-function laws across all generators.

Usage: python3 scripts/run_campaign.py [-n INSTANCES] [--seed SEED]
"""

import argparse
import json
import subprocess
import sys

GENERATORS = ("general", "unit-demand", "large-caps", "common-favorite")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-n", "--instances", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    exit_code = 0
    for gen in GENERATORS:
        proc = subprocess.run(
            [
                sys.executable, "-m", "fairalloc.cli", "campaign",
                "--generator", gen, "-n", str(args.instances),
                "--seed", str(args.seed),
            ],
            capture_output=True, text=True,
        )
        if proc.returncode not in (0, 1):
            print(f"{gen}: campaign crashed\n{proc.stderr}", file=sys.stderr)
            exit_code = proc.returncode
            continue
        report = json.loads(proc.stdout)
        counters = report["counters"]
        bad = sum(v for k, v in counters.items() if k.endswith("violations"))
        status = "ok" if bad == 0 else f"{bad} VIOLATIONS"
        print(
            f"{gen:16s} instances={counters['instances']} "
            f"price_points={counters['price_points']} {status}"
        )
        if bad:
            exit_code = 1
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
