import random
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from fairalloc.simplexlp import solve_lp

F = Fraction


def test_simple_maximization():
    # max x + y st x <= 2, y <= 3
    res = solve_lp(
        [F(1), F(1)],
        a_ub=[[F(1), F(0)], [F(0), F(1)]],
        b_ub=[F(2), F(3)],
    )
    assert res.optimal
    assert res.value == 5
    assert res.x == (F(2), F(3))


def test_equality_constraints():
    # max 2x + y st x + y == 1
    res = solve_lp(
        [F(2), F(1)], a_eq=[[F(1), F(1)]], b_eq=[F(1)]
    )
    assert res.optimal and res.value == 2 and res.x == (F(1), F(0))


def test_infeasible():
    res = solve_lp(
        [F(1)], a_ub=[[F(1)]], b_ub=[F(-1)]
    )
    assert res.status == "infeasible"


def test_unbounded():
    res = solve_lp([F(1)], a_ub=[[F(-1)]], b_ub=[F(0)])
    assert res.status == "unbounded"


def test_exact_fractions():
    # max x st 3x <= 1
    res = solve_lp([F(1)], a_ub=[[F(3)]], b_ub=[F(1)])
    assert res.x == (F(1, 3),)


@pytest.mark.parametrize("seed", range(5))
def test_fuzz_against_scipy(seed):
    rng = random.Random(seed)
    for _ in range(40):
        n = rng.randint(1, 4)
        m = rng.randint(1, 4)
        k = rng.randint(0, 2)
        c = [F(rng.randint(-5, 5)) for _ in range(n)]
        a_ub = [[F(rng.randint(-4, 4)) for _ in range(n)] for _ in range(m)]
        b_ub = [F(rng.randint(0, 8)) for _ in range(m)]
        a_eq = [[F(rng.randint(-3, 3)) for _ in range(n)] for _ in range(k)]
        b_eq = [F(rng.randint(0, 4)) for _ in range(k)]
        res = solve_lp(c, a_ub, b_ub, a_eq or None, b_eq or None)
        ref = linprog(
            [-float(v) for v in c],
            A_ub=[[float(v) for v in row] for row in a_ub] or None,
            b_ub=[float(v) for v in b_ub] or None,
            A_eq=[[float(v) for v in row] for row in a_eq] if k else None,
            b_eq=[float(v) for v in b_eq] if k else None,
            bounds=[(0, None)] * n,
            method="highs",
        )
        if ref.status == 0:
            assert res.optimal, (c, a_ub, b_ub, a_eq, b_eq)
            assert abs(float(res.value) + ref.fun) < 1e-7
        else:
            # HiGHS presolve sometimes labels unbounded-but-feasible
            # problems "infeasible", so only the non-optimal fact is
            # cross-checked here; statuses are covered by unit tests.
            assert res.status in ("infeasible", "unbounded")


def test_solution_feasibility_exact():
    rng = random.Random(99)
    for _ in range(60):
        n = rng.randint(1, 4)
        m = rng.randint(1, 3)
        c = [F(rng.randint(-5, 5)) for _ in range(n)]
        a_ub = [[F(rng.randint(0, 4)) for _ in range(n)] for _ in range(m)]
        b_ub = [F(rng.randint(1, 8)) for _ in range(m)]
        res = solve_lp(c, a_ub, b_ub)
        if not res.optimal:
            continue
        for row, b in zip(a_ub, b_ub):
            assert sum(a * x for a, x in zip(row, res.x)) <= b
        assert all(x >= 0 for x in res.x)
        assert res.value == sum(ci * xi for ci, xi in zip(c, res.x))
