import itertools
import random
from fractions import Fraction

import pytest

from fairalloc.constraints import Constraint, ConstraintStructure
from fairalloc.fairness import (
    BLOCKED_BY_TYPE,
    EPS_JUSTIFIED,
    JUSTIFIED,
    STRONGLY_JUSTIFIED,
    UNJUSTIFIED,
    audit,
    check_exchange_envy,
    check_ir,
    check_pairwise_envy,
    check_pareto,
    equal_treatment_audit,
)
from fairalloc.model import Agent, Allocation, AllocationProblem, LinearUtility

F = Fraction


def _problem(caps, values, q, reservations=None):
    reservations = reservations or [0] * len(caps)
    agents = tuple(
        Agent(
            f"a{i}",
            F(c),
            LinearUtility(tuple(F(v) for v in vals)),
            F(r),
        )
        for i, (c, vals, r) in enumerate(zip(caps, values, reservations))
    )
    return AllocationProblem(
        tuple(f"o{l}" for l in range(len(q))), tuple(F(v) for v in q), agents
    )


# golden audits on the worked example


def test_ir_slacks_golden(example_allocation, example_problem):
    slacks, ok = check_ir(example_allocation, example_problem)
    assert slacks == (F(1), F(0), F(7, 6), F(7, 6), F(7, 6))
    assert ok


def test_ir_large_epsilon_always_true(example_allocation, example_problem):
    _, ok = check_ir(example_allocation, example_problem, F(10**6))
    assert ok


def test_ir_false_on_bad_allocation(example_problem):
    x = Allocation((
        (F(1), F(2), F(2)),
        (F(0), F(0), F(0)),
        (F(0), F(0), F(0)),
        (F(0), F(0), F(0)),
        (F(0), F(0), F(0)),
    ))
    slacks, ok = check_ir(x, example_problem)
    assert not ok
    assert min(slacks) < 0


def test_envy_fact_golden(example_allocation, example_problem):
    facts = check_pairwise_envy(example_allocation, example_problem)
    assert len(facts) == 1
    f = facts[0]
    assert (f.envier, f.envied) == (0, 1)
    assert f.gap == F(1, 2)
    assert f.justification == UNJUSTIFIED
    assert f.envied_value_of_enviers_bundle == F(1)
    assert f.envied_reservation == F(2)


def test_no_envy_between_identical_rows():
    p = _problem([1, 1], [[2, 1], [2, 1]], [1, 1])
    x = Allocation(((F(1, 2), F(1, 2)), (F(1, 2), F(1, 2))))
    assert check_pairwise_envy(x, p) == []


def test_envy_justified_when_reservation_low():
    p = _problem([1, 1], [[1, 2], [1, 2]], [1, 1], reservations=[0, 0])
    x = Allocation(((F(1), F(0)), (F(0), F(1))))
    facts = check_pairwise_envy(x, p)
    assert len(facts) == 1
    assert facts[0].justification == STRONGLY_JUSTIFIED


def test_exchange_envy_golden(example_allocation, example_problem):
    facts = check_exchange_envy(example_allocation, example_problem)
    assert len(facts) == 1
    assert facts[0].justification == UNJUSTIFIED
    assert facts[0].chain is None


def test_exchange_cycle_three_agents():
    # 1 envies 2, 2 envies 3, and 3 accepts 1's bundle
    p = _problem(
        [1, 1, 1],
        [[1, 3, 2], [1, 2, 3], [3, 1, 2]],
        [1, 1, 1],
        reservations=[3, 3, 2],
    )
    x = Allocation(((F(1), F(0), F(0)),
                    (F(0), F(1), F(0)),
                    (F(0), F(0), F(1))))
    pairwise = {
        (f.envier, f.envied): f for f in check_pairwise_envy(x, p)
    }
    assert pairwise[(0, 1)].justification == UNJUSTIFIED
    facts = check_exchange_envy(x, p)
    chains = {
        (f.envier, f.envied): f for f in facts
    }
    f = chains[(0, 1)]
    assert f.justification in (JUSTIFIED, STRONGLY_JUSTIFIED)
    assert f.chain == (0, 1, 2)


def test_exchange_matches_brute_force():
    """BFS result equals exhaustive simple-path enumeration on small
    random instances."""
    rng = random.Random(12)
    for _ in range(150):
        n = rng.randint(2, 5)
        L = rng.randint(1, 3)
        q = [rng.randint(1, 2) for _ in range(L)]
        p = _problem(
            [sum(q)] * n,
            [[rng.randint(0, 4) or 1 for _ in range(L)] for _ in range(n)],
            q,
            reservations=[rng.randint(0, 5) for _ in range(n)],
        )
        # random allocation: spread each object's supply over agents
        rows = [[F(0)] * L for _ in range(n)]
        for l in range(L):
            units = [rng.randint(0, 3) for _ in range(n)]
            total = sum(units) or 1
            for i in range(n):
                rows[i][l] = F(units[i] * q[l], total)
        x = Allocation(tuple(tuple(r) for r in rows))
        um = [[p.agents[i].utility(row) for row in x.rows] for i in range(n)]
        envies = [[um[i][j] > um[i][i] for j in range(n)] for i in range(n)]

        def brute(i, j):
            for k in range(2, n + 1):
                for perm in itertools.permutations(
                    [a for a in range(n) if a not in (i, j)], k - 2
                ):
                    chain = (i, j) + perm
                    if all(
                        envies[chain[t]][chain[t + 1]]
                        for t in range(len(chain) - 1)
                    ):
                        last = chain[-1]
                        if um[last][i] >= p.agents[last].reservation:
                            return True
            return False

        facts = {
            (f.envier, f.envied): f for f in check_exchange_envy(x, p)
        }
        for i in range(n):
            for j in range(n):
                if i == j or not envies[i][j]:
                    continue
                expected = brute(i, j)
                got = facts[(i, j)].justification in (
                    JUSTIFIED, STRONGLY_JUSTIFIED
                )
                assert got == expected, (i, j, x.rows)


def test_pairwise_justified_implies_exchange_justified():
    rng = random.Random(5)
    for _ in range(60):
        n = rng.randint(2, 4)
        p = _problem(
            [2] * n,
            [[rng.randint(1, 4), rng.randint(1, 4)] for _ in range(n)],
            [2, 2],
            reservations=[rng.randint(0, 4) for _ in range(n)],
        )
        rows = [[F(0), F(0)] for _ in range(n)]
        for l in range(2):
            units = [rng.randint(0, 3) for _ in range(n)]
            total = sum(units) or 1
            for i in range(n):
                rows[i][l] = F(units[i] * 2, total)
        x = Allocation(tuple(tuple(r) for r in rows))
        pw = {
            (f.envier, f.envied)
            for f in check_pairwise_envy(x, p)
            if f.justification in (JUSTIFIED, STRONGLY_JUSTIFIED)
        }
        ex = {
            (f.envier, f.envied)
            for f in check_exchange_envy(x, p)
            if f.justification in (JUSTIFIED, STRONGLY_JUSTIFIED)
        }
        assert pw <= ex


def test_epsilon_monotonicity(example_allocation, example_problem):
    """The set of epsilon-justified facts weakly grows with epsilon."""
    p = _problem([1, 1], [[2, 1], [1, 2]], [1, 1], reservations=[2, F(3, 2)])
    x = Allocation(((F(0), F(1)), (F(1), F(0))))
    counts = []
    for eps in (F(0), F(1, 4), F(1), F(3)):
        facts = check_pairwise_envy(x, p, eps)
        counts.append(sum(1 for f in facts if f.is_eps_justified))
    assert counts == sorted(counts)


def test_blocked_by_type():
    p = _problem([1, 1], [[1, 2], [1, 2]], [1, 1])
    cs = ConstraintStructure((
        Constraint(frozenset({(0, 0)}), F(0), F(1)),
    ))
    x = Allocation(((F(1), F(0)), (F(0), F(1))))
    facts = check_pairwise_envy(x, p, F(0), cs)
    assert len(facts) == 1
    assert facts[0].justification == BLOCKED_BY_TYPE


def test_pareto_golden(example_allocation, example_problem):
    cert = check_pareto(example_allocation, example_problem)
    assert cert.holds
    assert cert.improvement == 0


def test_pareto_single_agent_taking_everything():
    p = _problem([3], [[2, 1]], [1, 2])
    x = Allocation(((F(1), F(2)),))
    assert check_pareto(x, p).holds


def test_pareto_false_with_witness():
    # swapping rows strictly improves both agents
    p = _problem([1, 1], [[2, 1], [1, 2]], [1, 1])
    x = Allocation(((F(0), F(1)), (F(1), F(0))))
    cert = check_pareto(x, p)
    assert not cert.holds
    assert cert.improvement > 0
    assert cert.witness is not None


def test_pareto_mode_implications(example_allocation, example_problem):
    po = check_pareto(example_allocation, example_problem, mode="PO")
    wpo = check_pareto(example_allocation, example_problem, mode="wPO")
    epo = check_pareto(
        example_allocation, example_problem, mode="ePO", epsilon=F(1, 100)
    )
    assert po.holds and wpo.holds and epo.holds


def test_equal_treatment_clean(example_allocation, example_problem):
    assert not equal_treatment_audit(example_allocation, example_problem)


def test_equal_treatment_violation():
    p = _problem(
        [1, 1], [[2, 1], [2, 1]], [1, 1], reservations=[1, 1]
    )
    x = Allocation(((F(0), F(1)), (F(1), F(0))))
    assert equal_treatment_audit(x, p)


def test_full_audit_golden(example_allocation, example_problem):
    report = audit(example_allocation, example_problem)
    assert report.ir_ok
    assert report.nje and report.nsje and report.nje_by_exchange
    assert report.pareto.holds
    assert report.passes
    data = report.to_json()
    assert data["ir"]["slacks"] == ["1", "0", "7/6", "7/6", "7/6"]
