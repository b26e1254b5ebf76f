"""Lottery implementation of fractional unit-demand allocations.

A fractional unit-demand allocation with integer object capacities is a
convex combination of deterministic assignments.  The decomposition
peels one integral assignment at a time: a min-cost-flow subroutine
produces an assignment supported on the residual whose per-object counts
round the residual's column averages, then the largest feasible weight
is subtracted.  Everything runs in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import networkx as nx

from .constraints import ConstraintStructure
from .model import Agent, Allocation, AllocationProblem, LinearUtility
from .rationals import frac_str

ZERO = Fraction(0)
ONE = Fraction(1)

NULL_OBJECT = "(null)"


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class Lottery:
    """A finite-support distribution over deterministic allocations."""

    atoms: tuple[Allocation, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.atoms) != len(self.weights):
            raise ValueError("atoms and weights must align")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if sum(self.weights) != 1:
            raise ValueError("weights must sum to one")

    def mean(self) -> Allocation:
        n = len(self.atoms[0].rows)
        L = len(self.atoms[0].rows[0])
        rows = [[ZERO] * L for _ in range(n)]
        for atom, w in zip(self.atoms, self.weights):
            for i in range(n):
                for l in range(L):
                    rows[i][l] += w * atom.rows[i][l]
        return Allocation(tuple(tuple(r) for r in rows))

    def to_json(self) -> dict:
        return {
            "weights": [frac_str(w) for w in self.weights],
            "atoms": [
                [[frac_str(v) for v in row] for row in atom.rows]
                for atom in self.atoms
            ],
        }


def pad_with_null(
    x: Allocation, problem: AllocationProblem
) -> tuple[Allocation, AllocationProblem]:
    """Append a zero-value null object absorbing each agent's slack so
    every row sums to exactly 1."""
    if any(a.cap != 1 for a in problem.agents):
        raise DecompositionError("padding requires unit caps")
    slack = [ONE - sum(row) for row in x.rows]
    if any(s < 0 for s in slack):
        raise DecompositionError("a row exceeds the unit cap")
    rows = tuple(tuple(row) + (s,) for row, s in zip(x.rows, slack))
    agents = tuple(
        Agent(a.name, a.cap, LinearUtility(a.utility.values + (ZERO,)), a.reservation)
        for a in problem.agents
    )
    padded = AllocationProblem(
        problem.objects + (NULL_OBJECT,),
        problem.capacities + (Fraction(len(x.rows)),),
        agents,
    )
    return Allocation(rows), padded


def _check_preconditions(x: Allocation, problem: AllocationProblem):
    if any(a.cap != 1 for a in problem.agents):
        raise DecompositionError("decomposition requires unit caps")
    for q in problem.capacities:
        if q.denominator != 1:
            raise DecompositionError("object capacities must be integers")
    if sum(problem.capacities) < len(x.rows):
        raise DecompositionError("total capacity below the number of agents")
    if len(x.rows) != problem.num_agents:
        raise DecompositionError("allocation shape does not match the problem")
    for i, row in enumerate(x.rows):
        if len(row) != problem.num_objects:
            raise DecompositionError("allocation shape does not match the problem")
        if any(v < 0 for v in row):
            raise DecompositionError(f"agent {i} has a negative share")
        if sum(row) > 1:
            raise DecompositionError(f"agent {i} row exceeds the unit cap")
    for l, q in enumerate(problem.capacities):
        col = sum((row[l] for row in x.rows), ZERO)
        if col > q:
            raise DecompositionError(
                f"object column {l} sums to {frac_str(col)} > {frac_str(q)}"
            )


def _peel_assignment(residual, remaining, caps):
    """An integral assignment supported on the residual whose object
    counts lie between the floor and ceiling of the scaled column sums.

    Min-cost flow with unit penalty above the floor; the fractional
    point residual/remaining witnesses a zero-excess solution, so an
    integral optimum saturates every floor.
    """
    n = len(residual)
    L = len(caps)
    sigma = [sum((row[l] for row in residual), ZERO) for l in range(L)]
    g = nx.DiGraph()
    g.add_node("s", demand=-n)
    g.add_node("t", demand=n)
    for i in range(n):
        g.add_edge("s", ("a", i), capacity=1, weight=0)
        for l in range(L):
            if residual[i][l] > 0:
                g.add_edge(("a", i), ("o", l), capacity=1, weight=0)
    for l in range(L):
        lo = sigma[l] // remaining  # floor of the scaled column sum
        hi = -((-sigma[l]) // remaining)  # ceiling
        g.add_edge(("o", l), "t", capacity=int(lo), weight=0)
        g.add_edge(("o", l), ("hi", l), capacity=int(hi - lo), weight=1)
        g.add_edge(("hi", l), "t", capacity=int(hi - lo), weight=0)
    try:
        flow = nx.min_cost_flow(g)
    except nx.NetworkXUnfeasible as exc:
        raise DecompositionError(
            "support admits no integral assignment; input is not an allocation"
        ) from exc
    counts = [0] * L
    vertex = [[ZERO] * L for _ in range(n)]
    for i in range(n):
        for node, f in flow[("a", i)].items():
            if f:
                vertex[i][node[1]] = ONE
                counts[node[1]] += 1
    for l in range(L):
        hi = -((-sigma[l]) // remaining)  # ceiling
        if not (sigma[l] // remaining <= counts[l] <= hi):
            raise DecompositionError("flow violated column rounding bounds")
    return vertex, counts, sigma


def bvn_decompose(
    x: Allocation,
    problem: AllocationProblem,
    cs: ConstraintStructure | None = None,
) -> Lottery:
    """Decompose a unit-demand fractional allocation into a lottery over
    deterministic assignments.

    Rows summing to less than 1 are completed with an artificial null
    object (the returned atoms then live in the padded problem).
    Constraint structures are refused: atoms of a decomposition need not
    stay inside a constrained feasible set even when the average does.
    """
    if cs is not None and cs.constraints:
        raise DecompositionError(
            "cannot guarantee constraint feasibility atom by atom; "
            "pass cs=None and audit atoms separately"
        )
    _check_preconditions(x, problem)
    if any(sum(row) < 1 for row in x.rows):
        x, problem = pad_with_null(x, problem)
    n = len(x.rows)
    caps = problem.capacities
    L = len(caps)
    residual = [list(row) for row in x.rows]
    remaining = ONE
    atoms = []
    weights = []
    budget = sum(1 for row in x.rows for v in row if v > 0) + L + 1
    while remaining > 0:
        if len(atoms) >= budget:
            raise DecompositionError("peeling failed to terminate")
        vertex, counts, sigma = _peel_assignment(residual, remaining, caps)
        theta = min(
            residual[i][l]
            for i in range(n)
            for l in range(L)
            if vertex[i][l] == ONE
        )
        # keep scaled column sums within capacity for the next round
        for l in range(L):
            if counts[l] < caps[l]:
                bound = (caps[l] * remaining - sigma[l]) / (caps[l] - counts[l])
                if bound < theta:
                    theta = bound
        theta = min(theta, remaining)
        if theta <= 0:
            raise DecompositionError("peeling stalled at zero weight")
        atoms.append(Allocation(tuple(tuple(r) for r in vertex)))
        weights.append(theta)
        for i in range(n):
            for l in range(L):
                if vertex[i][l] == ONE:
                    residual[i][l] -= theta
        remaining -= theta
    lot = Lottery(tuple(atoms), tuple(weights))
    if lot.mean().rows != x.rows:
        raise DecompositionError("reconstruction mismatch")
    return lot
