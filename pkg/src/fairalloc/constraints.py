"""Quantitative constraint structures, swaps, and equal-type partitions."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .model import Allocation, AllocationProblem, DomainError
from .rationals import to_fraction

ZERO = Fraction(0)


@dataclass(frozen=True)
class Constraint:
    """A floor/ceiling bound on the mass inside a set of (agent, object) cells.

    Bounds are rationals, not integers: fractional allocations make
    fractional interim quotas meaningful.
    """

    cells: frozenset[tuple[int, int]]
    floor: Fraction
    ceiling: Fraction

    def __post_init__(self):
        object.__setattr__(self, "cells", frozenset(self.cells))
        object.__setattr__(self, "floor", to_fraction(self.floor))
        object.__setattr__(self, "ceiling", to_fraction(self.ceiling))
        if not self.cells:
            raise ValueError("constraint cell set must be nonempty")
        if self.floor < 0 or self.floor > self.ceiling:
            raise ValueError("need 0 <= floor <= ceiling")

    def section(self, agent: int) -> frozenset[int]:
        """Objects this constraint ties to the given agent."""
        return frozenset(l for (i, l) in self.cells if i == agent)

    def cell_sum(self, x: Allocation) -> Fraction:
        return sum((x.rows[i][l] for (i, l) in self.cells), ZERO)


@dataclass(frozen=True)
class ConstraintStructure:
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def anonymous(self) -> bool:
        """True when every constraint has the product form I x O'."""
        return all(self._is_product_over_all_agents(c) for c in self.constraints)

    def _is_product_over_all_agents(self, c: Constraint) -> bool:
        agents = {i for (i, _) in c.cells}
        objects = {l for (_, l) in c.cells}
        if len(c.cells) != len(agents) * len(objects):
            return False
        return True  # caller checks agent coverage against the problem

    def validate_against(self, problem: AllocationProblem) -> list[str]:
        issues = []
        for k, c in enumerate(self.constraints):
            for (i, l) in c.cells:
                if not (0 <= i < problem.num_agents):
                    issues.append(f"constraint {k} references unknown agent {i}")
                if not (0 <= l < problem.num_objects):
                    issues.append(f"constraint {k} references unknown object {l}")
        return issues


@dataclass(frozen=True)
class TypePartition:
    blocks: tuple[frozenset[int], ...]

    def block_of(self, i: int) -> frozenset[int]:
        for b in self.blocks:
            if i in b:
                return b
        raise KeyError(i)

    def same_block(self, i: int, j: int) -> bool:
        return j in self.block_of(i)


def feasible(x: Allocation, cs: ConstraintStructure, problem: AllocationProblem) -> bool:
    """True iff every constraint's cell sum lies within its bounds."""
    issues = cs.validate_against(problem)
    if issues:
        raise ValueError("; ".join(issues))
    for c in cs.constraints:
        s = c.cell_sum(x)
        if s < c.floor or s > c.ceiling:
            return False
    return True


def swap(x: Allocation, i: int, j: int, problem: AllocationProblem) -> Allocation:
    """Exchange rows i and j; raises rather than returning a cap-infeasible
    allocation when the agents' caps differ."""
    y = x.swap(i, j)
    for k in (i, j):
        if sum(y.rows[k]) > problem.agents[k].cap:
            raise DomainError(
                f"swap breaches cap of agent {problem.agents[k].name}"
            )
    return y


def _type_key(i: int, problem: AllocationProblem, cs: ConstraintStructure):
    # Sound syntactic criterion: equal caps and identical object-sections in
    # every constraint imply every swap preserves every cell sum.
    return (
        problem.agents[i].cap,
        tuple(c.section(i) for c in cs.constraints),
    )


def type_partition(problem: AllocationProblem, cs: ConstraintStructure) -> TypePartition:
    """Partition agents into equal types (conservative, never merges agents
    whose swap could leave A^C)."""
    groups: dict = {}
    for i in range(problem.num_agents):
        groups.setdefault(_type_key(i, problem, cs), []).append(i)
    blocks = tuple(
        frozenset(members)
        for _, members in sorted(groups.items(), key=lambda kv: min(kv[1]))
    )
    return TypePartition(blocks)


def is_equal_type(
    i: int, j: int, problem: AllocationProblem, cs: ConstraintStructure
) -> bool:
    if i == j:
        return True
    return _type_key(i, problem, cs) == _type_key(j, problem, cs)
