"""Run the simplicial solver down an epsilon schedule and report the limit.

Certifies the bundled example economy (or any problem JSON) at each epsilon
in a geometric schedule and prints the Cauchy gaps between consecutive
allocations plus the limit audit.

Usage: python3 scripts/epsilon_schedule.py [problem.json] [--steps K]
"""

import argparse
import json
import os
import time
from fractions import Fraction

from fairalloc.kkm import KKMConfig, kkm_limit
from fairalloc.serialize import problem_from_json

DEFAULT = os.path.join(
    os.path.dirname(__file__), "..", "tests", "data", "example_economy.json"
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem", nargs="?", default=DEFAULT)
    ap.add_argument("--steps", type=int, default=3)
    ap.add_argument("--start", default="1/10")
    args = ap.parse_args()

    with open(args.problem) as fh:
        problem, cs = problem_from_json(json.load(fh))
    eps0 = Fraction(args.start)
    schedule = tuple(eps0 / 10**k for k in range(args.steps))
    cfg = KKMConfig(epsilon=eps0)

    t0 = time.perf_counter()
    traj = kkm_limit(problem, cs, schedule, cfg)
    elapsed = time.perf_counter() - t0

    for cert in traj.certificates:
        print(f"eps={cert.epsilon}  certified={cert.certified}  "
              f"weights={[str(w) for w in cert.weights.weights]}")
    for eps, gap in zip(schedule[1:], traj.cauchy_gaps):
        print(f"gap entering eps={eps}: {float(gap):.3e}")
    final = traj.final_report
    print(f"limit audit: ir_ok={final.ir_ok} wPO={final.pareto.holds} "
          f"nsje={final.nsje}  ({elapsed:.2f}s)")


if __name__ == "__main__":
    main()
