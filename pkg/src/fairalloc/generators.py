"""Seeded random instance generators used by property campaigns and tests.

All quantities are drawn on small denominator grids so instances stay in
exact rational arithmetic end to end.  Endowment profiles start from the
cap-proportional feasible baseline and get feasibility-preserving
perturbations, so `reservation_from_endowment` always succeeds.
"""

from __future__ import annotations

import random
from fractions import Fraction

from .model import (
    Agent,
    Allocation,
    AllocationProblem,
    LinearUtility,
    reservation_from_endowment,
)

ZERO = Fraction(0)
ONE = Fraction(1)


def _rand_frac(rng: random.Random, lo: int, hi: int, denom: int) -> Fraction:
    return Fraction(rng.randint(lo * denom, hi * denom), denom)


def random_values(rng, L: int, denom: int = 10) -> tuple[Fraction, ...]:
    while True:
        vals = tuple(_rand_frac(rng, 0, 5, denom) for _ in range(L))
        if any(v > 0 for v in vals):
            return vals


def _baseline_endowment(caps, capacities):
    total = sum(caps)
    return [[q * c / total for q in capacities] for c in caps]


def _perturb_endowment(rng, rows, caps, capacities, steps: int, denom: int):
    """Move mass of one object between two agents, respecting caps and
    nonnegativity; keeps column sums (hence feasibility) exact."""
    n, L = len(rows), len(capacities)
    if n < 2:
        return rows
    rows = [list(r) for r in rows]
    for _ in range(steps):
        i, j = rng.sample(range(n), 2)
        l = rng.randrange(L)
        cap_room = caps[j] - sum(rows[j])
        ceiling = min(rows[i][l], cap_room)
        if ceiling <= 0:
            continue
        units = int(ceiling * denom)
        if units == 0:
            continue
        delta = Fraction(rng.randint(1, units), denom)
        rows[i][l] -= delta
        rows[j][l] += delta
    return [tuple(r) for r in rows]


def random_problem(
    rng: random.Random,
    max_agents: int = 5,
    max_objects: int = 4,
    denom: int = 10,
    unit_demand: bool = False,
    perturb: int = 6,
) -> AllocationProblem:
    """A random problem with endowment-derived reservations (IR-feasible
    by construction)."""
    n = rng.randint(1, max_agents)
    L = rng.randint(1, max_objects)
    if unit_demand:
        caps = [ONE] * n
        q = [Fraction(rng.randint(1, 3)) for _ in range(L)]
        total = sum(q)
        if total > n:
            # shrink uniformly onto the grid so the baseline fills caps
            q = [Fraction(int(v * n * denom // total), denom) for v in q]
            while sum(q) > n:
                l = max(range(L), key=lambda k: q[k])
                q[l] -= Fraction(1, denom)
    else:
        caps = [Fraction(rng.randint(1, 3)) for _ in range(n)]
        q = [_rand_frac(rng, 1, 4, denom) for _ in range(L)]
        total_cap = sum(caps)
        if sum(q) > total_cap:
            scale = total_cap / sum(q)
            q = [Fraction(int(v * scale * denom), denom) for v in q]
    q = [v for v in q]
    if all(v == 0 for v in q):
        q[0] = Fraction(1, denom)
    agents = tuple(
        Agent(f"a{i}", caps[i], LinearUtility(random_values(rng, L)), ZERO)
        for i in range(n)
    )
    problem = AllocationProblem(
        tuple(f"o{l}" for l in range(L)), tuple(q), agents
    )
    rows = _baseline_endowment(caps, problem.capacities)
    rows = _perturb_endowment(
        rng, rows, problem.caps, problem.capacities, perturb, denom * 4
    )
    reservations = reservation_from_endowment(problem, [list(r) for r in rows])
    return problem.with_reservations(reservations)


def random_large_caps_problem(
    rng: random.Random, max_agents: int = 5, max_objects: int = 4
) -> AllocationProblem:
    """Total supply strictly below every agent's cap (caps never bind)."""
    problem = random_problem(rng, max_agents, max_objects)
    supply = sum(problem.capacities)
    agents = tuple(
        Agent(a.name, supply + 1, a.utility, a.reservation)
        for a in problem.agents
    )
    return AllocationProblem(problem.objects, problem.capacities, agents)


def random_common_favorite_problem(
    rng: random.Random, max_agents: int = 5, max_objects: int = 4
) -> AllocationProblem:
    """Every agent strictly prefers the same object; reservations scaled
    down so a strictly positive IR allocation exists."""
    problem = random_problem(rng, max_agents, max_objects)
    L = problem.num_objects
    star = rng.randrange(L)
    agents = []
    for a in problem.agents:
        vals = list(a.utility.values)
        top = max(vals)
        vals[star] = top + Fraction(rng.randint(1, 3), 2)
        # shrink the reservation to leave interior IR room
        agents.append(
            Agent(
                a.name,
                a.cap,
                LinearUtility(tuple(vals)),
                a.reservation / 2,
            )
        )
    return AllocationProblem(
        problem.objects, problem.capacities, tuple(agents)
    )


def random_clone_problem(
    rng: random.Random, max_agents: int = 4, max_objects: int = 4
) -> tuple[AllocationProblem, tuple[int, int]]:
    """A problem containing two clones: identical caps, utilities and
    reservations.  Returns the problem and the clone index pair."""
    base = random_problem(rng, max_agents, max_objects)
    i = rng.randrange(base.num_agents)
    clone_src = base.agents[i]
    clone = Agent(
        f"{clone_src.name}_clone",
        clone_src.cap,
        clone_src.utility,
        clone_src.reservation,
    )
    agents = base.agents + (clone,)
    # absorb the clone's cap into the supply side only if IR still holds:
    # keeping capacities unchanged is safe because reservations came from
    # an endowment of the original agents; the clone needs its own slice.
    # Rebuild reservations from a shared endowment split between clones.
    problem = AllocationProblem(base.objects, base.capacities, agents)
    caps = [a.cap for a in agents]
    rows = _baseline_endowment(caps, problem.capacities)
    reservations = reservation_from_endowment(problem, rows)
    problem = problem.with_reservations(reservations)
    return problem, (i, problem.num_agents - 1)


def random_unit_demand_allocation(
    rng: random.Random, max_agents: int = 6, max_objects: int = 4
) -> tuple[Allocation, AllocationProblem]:
    """A fractional unit-demand allocation built as a random mixture of
    deterministic assignments (so a decomposition is guaranteed)."""
    n = rng.randint(1, max_agents)
    L = rng.randint(1, max_objects)
    q = [rng.randint(1, 3) for _ in range(L)]
    while sum(q) < n:
        q[rng.randrange(L)] += 1
    agents = tuple(
        Agent(f"a{i}", ONE, LinearUtility(random_values(rng, L)), ZERO)
        for i in range(n)
    )
    problem = AllocationProblem(
        tuple(f"o{l}" for l in range(L)),
        tuple(Fraction(v) for v in q),
        agents,
    )
    k = rng.randint(1, 5)
    mats = []
    for _ in range(k):
        room = list(q)
        m = [[ZERO] * L for _ in range(n)]
        for i in range(n):
            l = rng.choice([l for l in range(L) if room[l] > 0])
            room[l] -= 1
            m[i][l] = ONE
        mats.append(m)
    w = [Fraction(rng.randint(1, 9)) for _ in range(k)]
    s = sum(w)
    w = [v / s for v in w]
    rows = tuple(
        tuple(sum(w[t] * mats[t][i][l] for t in range(k)) for l in range(L))
        for i in range(n)
    )
    return Allocation(rows), problem


def random_prices(rng: random.Random, L: int, denom: int = 20):
    """A random rational price vector on the simplex."""
    units = [rng.randint(0, denom) for _ in range(L)]
    if sum(units) == 0:
        units[rng.randrange(L)] = 1
    total = sum(units)
    return tuple(Fraction(u, total) for u in units)
