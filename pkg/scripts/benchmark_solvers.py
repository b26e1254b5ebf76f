"""Timing and success-rate comparison of the two solvers on random instances.

Usage: python3 scripts/benchmark_solvers.py [-n INSTANCES] [--seed SEED]
"""

import argparse
import random
import time
from fractions import Fraction

from fairalloc import generators
from fairalloc.kkm import KKMConfig, KKMSearchError, kkm_search
from fairalloc.market import (
    EquilibriumSearchError,
    MarketConfig,
    solve_equilibrium,
    verify_equilibrium,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("-n", "--instances", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epsilon", default="1/100")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    kcfg = KKMConfig(epsilon=Fraction(args.epsilon))
    rows = []
    for k in range(args.instances):
        p = generators.random_large_caps_problem(rng)
        t0 = time.perf_counter()
        try:
            cert = kkm_search(p, None, kcfg)
            kkm_ok, kkm_t = cert.certified, time.perf_counter() - t0
        except KKMSearchError:
            kkm_ok, kkm_t = False, time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            eq = solve_equilibrium(p, MarketConfig(seed=k))
            mk_ok = verify_equilibrium(eq, p).ok
            mk_t = time.perf_counter() - t0
        except EquilibriumSearchError:
            mk_ok, mk_t = False, time.perf_counter() - t0
        rows.append((p.num_agents, p.num_objects, kkm_ok, kkm_t, mk_ok, mk_t))
        print(f"[{k:3d}] N={p.num_agents} L={p.num_objects}  "
              f"kkm {'ok ' if kkm_ok else 'FAIL'} {kkm_t:6.2f}s   "
              f"market {'ok ' if mk_ok else 'FAIL'} {mk_t:6.2f}s")

    n = len(rows)
    print(f"\nkkm:    {sum(r[2] for r in rows)}/{n} certified, "
          f"mean {sum(r[3] for r in rows) / n:.2f}s")
    print(f"market: {sum(r[4] for r in rows)}/{n} verified, "
          f"mean {sum(r[5] for r in rows) / n:.2f}s")


if __name__ == "__main__":
    main()
