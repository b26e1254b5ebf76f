import itertools
import random
from fractions import Fraction

import pytest
from scipy.optimize import linprog

from fairalloc import generators
from fairalloc.market import (
    MarketConfig,
    UnreachableUtilityError,
    demand,
    detect_hypothesis_class,
    excess_demand,
    expenditure,
    income_schedule,
    satiation_value,
    solve_equilibrium,
    verify_equilibrium,
)
from fairalloc.model import Agent, AllocationProblem, LinearUtility

F = Fraction


def _uniform(L):
    return tuple(F(1, L) for _ in range(L))


def test_satiation_golden(example_problem):
    a1 = example_problem.agents[0]
    assert satiation_value(a1.utility.values, a1.cap) == 3


def test_satiation_cap_times_max():
    assert satiation_value((F(1), F(4)), F(2)) == 8


def test_expenditure_golden(example_problem):
    assert expenditure((F(3), F(1), F(2)), F(1), F(1), _uniform(3)) == F(1, 9)


def test_expenditure_zero_target():
    assert expenditure((F(3), F(1)), F(1), F(0), (F(1, 2), F(1, 2))) == 0


def test_expenditure_unreachable():
    with pytest.raises(UnreachableUtilityError):
        expenditure((F(1),), F(1), F(2), (F(1),))


def test_expenditure_one_good_satiation():
    assert expenditure((F(1),), F(2), F(2), (F(1),)) == 2


def test_demand_golden():
    x = demand((F(2), F(1)), F(1), (F(1, 2), F(1, 2)), F(1, 4))
    assert x == (F(1, 2), F(0))


def test_demand_zero_income():
    assert demand((F(2), F(1)), F(1), (F(1, 2), F(1, 2)), F(0)) == (F(0), F(0))


def test_demand_satiated_minimal_spending():
    prices = (F(1, 4), F(3, 4))
    x = demand((F(3), F(1)), F(1), prices, F(1))
    assert x == (F(1), F(0))
    assert sum(p * v for p, v in zip(prices, x)) == expenditure(
        (F(3), F(1)), F(1), F(3), prices
    )


def test_demand_respects_cap_and_budget():
    rng = random.Random(21)
    for _ in range(300):
        L = rng.randint(1, 4)
        values = generators.random_values(rng, L)
        cap = F(rng.randint(1, 3))
        prices = generators.random_prices(rng, L)
        income = F(rng.randint(0, 40), 10)
        x = demand(values, cap, prices, income)
        assert sum(x) <= cap
        assert sum(p * v for p, v in zip(prices, x)) <= income


def _expenditure_oracle(values, cap, target, prices):
    """Float LP reference: min p.x st v.x >= target, sum x <= cap."""
    L = len(values)
    res = linprog(
        [float(p) for p in prices],
        A_ub=[[-float(v) for v in values], [1.0] * L],
        b_ub=[-float(target), float(cap)],
        bounds=[(0, None)] * L,
        method="highs",
    )
    assert res.status == 0
    return res.fun


def _demand_oracle(values, cap, prices, income):
    """Best achievable utility on a fine grid of the budget set."""
    L = len(values)
    best = 0.0
    steps = 24
    vf = [float(v) for v in values]
    pf = [float(p) for p in prices]
    capf, mf = float(cap), float(income)

    def rec(l, left_cap, left_money, util):
        nonlocal best
        best = max(best, util)
        if l == L:
            return
        top = left_cap if pf[l] == 0 else min(left_cap, left_money / pf[l])
        for t in range(steps + 1):
            amt = top * t / steps
            rec(l + 1, left_cap - amt, left_money - pf[l] * amt, util + vf[l] * amt)

    rec(0, capf, mf, 0.0)
    return best


def test_expenditure_matches_lp_oracle():
    rng = random.Random(31)
    for _ in range(200):
        L = rng.randint(1, 4)
        values = generators.random_values(rng, L)
        cap = F(rng.randint(1, 3))
        prices = generators.random_prices(rng, L)
        vmax = satiation_value(values, cap)
        target = F(rng.randint(0, int(vmax * 10)), 10)
        got = expenditure(values, cap, target, prices)
        ref = _expenditure_oracle(values, cap, target, prices)
        assert abs(float(got) - ref) < 1e-9


def test_demand_matches_grid_oracle():
    rng = random.Random(32)
    for _ in range(60):
        L = rng.randint(1, 3)
        values = generators.random_values(rng, L)
        cap = F(rng.randint(1, 2))
        prices = generators.random_prices(rng, L)
        income = F(rng.randint(0, 20), 10)
        x = demand(values, cap, prices, income)
        got = float(sum(v * xi for v, xi in zip(values, x)))
        ref = _demand_oracle(values, cap, prices, income)
        assert got >= ref - 1e-6, (values, cap, prices, income)


def test_income_schedule_golden(example_problem):
    sched = income_schedule(_uniform(3), example_problem)
    assert sched.regime == "root"
    assert all(a.income == F(1, 3) for a in sched.agents)
    assert all(a.e_satiation == F(1, 3) for a in sched.agents)


def test_income_schedule_single_agent():
    p = AllocationProblem(
        ("x", "y"),
        (F(1), F(1)),
        (Agent("a", F(2), LinearUtility((F(2), F(1))), F(0)),),
    )
    for prices in ((F(1, 2), F(1, 2)), (F(1, 4), F(3, 4))):
        sched = income_schedule(prices, p)
        supply = sum(pr * q for pr, q in zip(prices, p.capacities))
        assert sum(a.income for a in sched.agents) == supply


def test_income_schedule_surplus_regime():
    # tiny caps, lots of supply: satiation spending below the supply value
    p = AllocationProblem(
        ("x",),
        (F(4),),
        (
            Agent("a", F(1), LinearUtility((F(1),)), F(0)),
            Agent("b", F(1), LinearUtility((F(1),)), F(0)),
        ),
    )
    sched = income_schedule((F(1),), p)
    assert sched.regime == "surplus"
    surplus = F(4) - 2  # p.Q - sum of satiation expenditures
    for a in sched.agents:
        assert a.income == a.e_satiation + surplus / 2
    assert sum(a.income for a in sched.agents) == 4


def test_income_identity_random():
    rng = random.Random(41)
    for _ in range(150):
        p = generators.random_problem(rng)
        prices = generators.random_prices(rng, p.num_objects)
        try:
            sched = income_schedule(prices, p)
        except ValueError:
            continue
        supply = sum(pr * q for pr, q in zip(prices, p.capacities))
        assert sum(a.income for a in sched.agents) == supply
        for a in sched.agents:
            assert a.e_reservation <= a.income


def test_poorer_agent_lemma_random():
    rng = random.Random(42)
    for _ in range(150):
        p = generators.random_problem(rng)
        prices = generators.random_prices(rng, p.num_objects)
        try:
            sched = income_schedule(prices, p)
        except ValueError:
            continue
        ag = sched.agents
        for i, j in itertools.permutations(range(len(ag)), 2):
            if ag[i].income < ag[j].income and ag[i].income < ag[i].e_satiation:
                assert ag[j].income == ag[j].e_reservation


def test_phi_weakly_monotone_random():
    rng = random.Random(43)
    for _ in range(40):
        p = generators.random_problem(rng)
        prices = generators.random_prices(rng, p.num_objects)
        try:
            sched = income_schedule(prices, p)
        except ValueError:
            continue
        supply = sum(pr * q for pr, q in zip(prices, p.capacities))
        prev = None
        for t in range(101):
            m = F(t, 100) * (supply + 1)
            val = sum(
                min(max(m, a.e_reservation), a.e_satiation)
                for a in sched.agents
            ) - supply
            if prev is not None:
                assert val >= prev
            prev = val


def test_detect_hypothesis_class_large_caps():
    p = AllocationProblem(
        ("x", "y"),
        (F(1), F(1)),
        (
            Agent("a", F(5), LinearUtility((F(2), F(1))), F(0)),
            Agent("b", F(5), LinearUtility((F(1), F(2))), F(0)),
        ),
    )
    assert detect_hypothesis_class(p) == "large-caps"


def test_two_clones_equilibrium():
    p = AllocationProblem(
        ("x", "y"),
        (F(1), F(1)),
        (
            Agent("a", F(1), LinearUtility((F(2), F(1))), F(0)),
            Agent("b", F(1), LinearUtility((F(2), F(1))), F(0)),
        ),
    )
    eq = solve_equilibrium(p)
    assert eq.allocation.rows[0] == eq.allocation.rows[1]
    report = verify_equilibrium(eq, p)
    assert report.ok, report.failures


def test_example_economy_large_caps_equilibrium(example_problem):
    agents = tuple(
        Agent(a.name, F(6), a.utility, a.reservation)
        for a in example_problem.agents
    )
    p = AllocationProblem(
        example_problem.objects, example_problem.capacities, agents
    )
    assert detect_hypothesis_class(p) == "large-caps"
    eq = solve_equilibrium(p)
    report = verify_equilibrium(eq, p)
    assert report.ok, report.failures
    assert report.clearing_residual == 0


def test_perturbed_price_fails_verification(example_problem):
    agents = tuple(
        Agent(a.name, F(6), a.utility, a.reservation)
        for a in example_problem.agents
    )
    p = AllocationProblem(
        example_problem.objects, example_problem.capacities, agents
    )
    eq = solve_equilibrium(p)
    z = excess_demand(eq.prices.p, p)
    assert all(v == 0 for v in z) or sum(
        pr * v for pr, v in zip(eq.prices.p, z)
    ) <= 0
    # nudge the price vector: the verification contract must notice
    perturbed = list(eq.prices.p)
    hi = max(range(len(perturbed)), key=lambda l: perturbed[l])
    lo = min(range(len(perturbed)), key=lambda l: perturbed[l])
    delta = F(1, 100)
    perturbed[hi] -= delta
    perturbed[lo] += delta
    z2 = excess_demand(tuple(perturbed), p)
    assert any(v != 0 for v in z2)


def test_solve_square_exact_and_singular():
    from fairalloc.market import _solve_square_exact

    sol = _solve_square_exact(
        [(F(2), F(1)), (F(1), F(1))], [F(3), F(2)]
    )
    assert sol == (F(1), F(1))
    assert _solve_square_exact(
        [(F(1), F(2)), (F(2), F(4))], [F(1), F(2)]
    ) is None


def test_tie_hyperplane_rows_contain_both_kinds():
    from fairalloc.market import _tie_hyperplane_rows

    agents = (
        Agent("1", F(2), LinearUtility((F(1), F(3), F(5))), F(0)),
    )
    p = AllocationProblem(("a", "b", "c"), (F(1), F(1), F(1)), agents)
    rows = _tie_hyperplane_rows(p)
    # every row annihilates some strictly positive price on its hyperplane
    # and is homogeneous: c . p = 0 with p scaled arbitrarily
    for row in rows:
        assert any(c != 0 for c in row)
        assert row[next(i for i, c in enumerate(row) if c != 0)] == 1
    # bang-per-buck tie between b and c: 3 p_c - 5 p_b = 0 holds at
    # p = (x, 3, 5); equal-gain tie over top-up good a between b and c:
    # (3-1)(p_c - p_a) = (5-1)(p_b - p_a) holds at p = (1, 2, 3)
    def satisfied_by(price):
        return [r for r in rows if sum(c * q for c, q in zip(r, price)) == 0]

    assert satisfied_by((F(7), F(3), F(5)))
    assert satisfied_by((F(1), F(2), F(3)))
