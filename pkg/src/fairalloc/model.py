"""Allocation problems, allocations, and linear utilities.

Everything is immutable and exact: quantities are `Fraction`s, operations
are pure functions.  Solvers elsewhere work in floats, but re-enter this
module (after grid rounding) for the authoritative audits.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .rationals import dot, frac_str, fracs, to_fraction

ZERO = Fraction(0)


class DomainError(ValueError):
    """Consumption vector outside an agent's consumption space."""


class InfeasibleError(ValueError):
    """Requested construction admits no feasible solution."""


@dataclass(frozen=True)
class LinearUtility:
    """vNM utility u(x) = values . x on the owning agent's consumption space."""

    values: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", fracs(self.values))
        if any(v < 0 for v in self.values):
            raise ValueError("utility values must be nonnegative")
        if all(v == 0 for v in self.values):
            raise ValueError("utility must have at least one positive value")

    @property
    def strictly_monotone(self) -> bool:
        return all(v > 0 for v in self.values)

    def __call__(self, x: Sequence[Fraction]) -> Fraction:
        return dot(self.values, fracs(x))


@dataclass(frozen=True)
class Agent:
    name: str
    cap: Fraction
    utility: LinearUtility
    reservation: Fraction

    def __post_init__(self):
        object.__setattr__(self, "cap", to_fraction(self.cap))
        object.__setattr__(self, "reservation", to_fraction(self.reservation))


@dataclass(frozen=True)
class AllocationProblem:
    objects: tuple[str, ...]
    capacities: tuple[Fraction, ...]
    agents: tuple[Agent, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "capacities", fracs(self.capacities))
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def caps(self) -> tuple[Fraction, ...]:
        return tuple(a.cap for a in self.agents)

    @property
    def reservations(self) -> tuple[Fraction, ...]:
        return tuple(a.reservation for a in self.agents)

    @property
    def weakly_monotone(self) -> bool:
        """True when some agent has a zero-valued object (solver guarantees
        are only claimed for strictly positive utilities)."""
        return any(not a.utility.strictly_monotone for a in self.agents)

    def with_reservations(self, reservations: Sequence[Fraction]) -> "AllocationProblem":
        agents = tuple(
            Agent(a.name, a.cap, a.utility, to_fraction(r))
            for a, r in zip(self.agents, reservations)
        )
        return AllocationProblem(self.objects, self.capacities, agents)


@dataclass(frozen=True)
class Allocation:
    rows: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(fracs(r) for r in self.rows))

    def row(self, i: int) -> tuple[Fraction, ...]:
        return self.rows[i]

    def column_sums(self) -> tuple[Fraction, ...]:
        n_cols = len(self.rows[0]) if self.rows else 0
        return tuple(
            sum((r[l] for r in self.rows), ZERO) for l in range(n_cols)
        )

    def swap(self, i: int, j: int) -> "Allocation":
        rows = list(self.rows)
        rows[i], rows[j] = rows[j], rows[i]
        return Allocation(tuple(rows))


def validate_problem(problem: AllocationProblem) -> list[str]:
    """Return the list of violated model invariants (empty when valid)."""
    violations: list[str] = []
    if problem.num_objects < 1:
        violations.append("at least one object required")
    if problem.num_agents < 1:
        violations.append("at least one agent required")
    if len(problem.capacities) != problem.num_objects:
        violations.append("capacities length differs from object count")
    for l, q in enumerate(problem.capacities):
        if q <= 0:
            violations.append(f"q_l > 0 fails for object {problem.objects[l]}")
    for a in problem.agents:
        if a.cap <= 0:
            violations.append(f"cap > 0 fails for agent {a.name}")
        if len(a.utility.values) != problem.num_objects:
            violations.append(f"utility length mismatch for agent {a.name}")
    if violations:
        return violations
    if sum(problem.capacities) > sum(problem.caps):
        violations.append("sum(q_l) <= sum(c^i) fails (overall excess supply)")
        return violations
    feasible, _ = ir_feasible(problem)
    if not feasible:
        violations.append("no individually rational allocation exists")
    return violations


def utility_of(utility: LinearUtility, x: Sequence[Fraction], cap: Fraction | None = None) -> Fraction:
    """Evaluate values . x, checking x lies in the consumption space."""
    xv = fracs(x)
    if any(v < 0 for v in xv):
        raise DomainError("negative consumption")
    if cap is not None and sum(xv) > to_fraction(cap):
        raise DomainError("consumption exceeds cap")
    return utility(xv)


def validate_allocation(
    x: Allocation, problem: AllocationProblem, tol: Fraction = ZERO
) -> list[str]:
    """Check x in A: rows in consumption spaces, columns exhaust capacities."""
    violations = []
    if len(x.rows) != problem.num_agents:
        return ["row count differs from agent count"]
    for i, (row, agent) in enumerate(zip(x.rows, problem.agents)):
        if len(row) != problem.num_objects:
            violations.append(f"row {agent.name} has wrong length")
            continue
        if any(v < -tol for v in row):
            violations.append(f"negative entry in row of {agent.name}")
        if sum(row) > agent.cap + tol:
            violations.append(f"cap exceeded for agent {agent.name}")
    for l, (got, q) in enumerate(zip(x.column_sums(), problem.capacities)):
        if abs(got - q) > tol:
            violations.append(
                f"object {problem.objects[l]} clears {frac_str(got)} != {frac_str(q)}"
            )
    return violations


def reservation_from_endowment(
    problem: AllocationProblem, endowments: Sequence[Sequence[Fraction]]
) -> tuple[Fraction, ...]:
    """Reservation utilities u^i(omega^i) from an endowment allocation.

    The endowment profile must itself be an allocation; it then witnesses
    IR feasibility for the induced reservations.
    """
    omega = Allocation(tuple(fracs(e) for e in endowments))
    problems = validate_allocation(omega, problem)
    if problems:
        raise InfeasibleError("infeasible endowment profile: " + "; ".join(problems))
    return tuple(
        utility_of(agent.utility, row, agent.cap)
        for agent, row in zip(problem.agents, omega.rows)
    )


def allocation_lp_rows(problem: AllocationProblem, cs=None):
    """Linear constraint rows defining A^C over the N*L flattened variables.

    Returns (a_ub, b_ub, a_eq, b_eq): row caps and constraint-structure
    bounds as inequalities, market clearing as equalities.
    """
    n, L = problem.num_agents, problem.num_objects
    nvars = n * L
    a_ub: list[list[Fraction]] = []
    b_ub: list[Fraction] = []
    for i, agent in enumerate(problem.agents):
        row = [ZERO] * nvars
        for l in range(L):
            row[i * L + l] = Fraction(1)
        a_ub.append(row)
        b_ub.append(agent.cap)
    if cs is not None:
        for c in cs.constraints:
            row = [ZERO] * nvars
            for (i, l) in c.cells:
                row[i * L + l] = Fraction(1)
            a_ub.append(row)
            b_ub.append(c.ceiling)
            a_ub.append([-v for v in row])
            b_ub.append(-c.floor)
    a_eq: list[list[Fraction]] = []
    b_eq: list[Fraction] = []
    for l in range(L):
        row = [ZERO] * nvars
        for i in range(n):
            row[i * L + l] = Fraction(1)
        a_eq.append(row)
        b_eq.append(problem.capacities[l])
    return a_ub, b_ub, a_eq, b_eq


def ir_feasible(
    problem: AllocationProblem,
    cs=None,
    epsilon: Fraction = ZERO,
) -> tuple[bool, Allocation | None]:
    """Solve the linear feasibility program for an (epsilon-)IR allocation
    in A^C; returns (feasible, witness)."""
    from .simplexlp import solve_lp

    n, L = problem.num_agents, problem.num_objects
    nvars = n * L
    a_ub, b_ub, a_eq, b_eq = allocation_lp_rows(problem, cs)
    eps = to_fraction(epsilon)
    for i, agent in enumerate(problem.agents):
        row = [ZERO] * nvars
        for l in range(L):
            row[i * L + l] = -agent.utility.values[l]
        a_ub.append(row)
        b_ub.append(-(agent.reservation - eps))
    res = solve_lp([ZERO] * nvars, a_ub, b_ub, a_eq, b_eq)
    if not res.optimal:
        return False, None
    rows = tuple(tuple(res.x[i * L + l] for l in range(L)) for i in range(n))
    return True, Allocation(rows)
