"""JSON schemas for problems, constraint structures and allocations.

Rationals are accepted as "p/q" strings or decimal numbers and always
emitted as strings.
"""

from __future__ import annotations

from fractions import Fraction

from .constraints import Constraint, ConstraintStructure
from .model import (
    Agent,
    Allocation,
    AllocationProblem,
    LinearUtility,
    reservation_from_endowment,
)
from .rationals import frac_str, fracs, to_fraction


class ParseError(ValueError):
    pass


def _cells_from_json(spec, agent_index: dict, object_index: dict):
    if isinstance(spec, dict):
        agents = [agent_index[a] for a in spec["agents"]]
        objects = [object_index[o] for o in spec["objects"]]
        return frozenset((i, l) for i in agents for l in objects)
    return frozenset(
        (agent_index[a], object_index[o]) for a, o in spec
    )


def constraints_from_json(
    data, problem: AllocationProblem
) -> ConstraintStructure:
    agent_index = {a.name: i for i, a in enumerate(problem.agents)}
    object_index = {o: l for l, o in enumerate(problem.objects)}
    try:
        constraints = tuple(
            Constraint(
                _cells_from_json(c["cells"], agent_index, object_index),
                to_fraction(c["floor"]),
                to_fraction(c["ceiling"]),
            )
            for c in data
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad constraint spec: {exc}") from exc
    return ConstraintStructure(constraints)


def problem_from_json(data: dict) -> tuple[AllocationProblem, ConstraintStructure | None]:
    try:
        objects = tuple(data["objects"])
        capacities = fracs(data["capacities"])
        raw_agents = data["agents"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing problem field: {exc}") from exc

    agents = []
    endowments = []
    for k, a in enumerate(raw_agents):
        try:
            name = a.get("name", f"agent{k}")
            cap = to_fraction(a.get("cap", 1))
            utility = LinearUtility(fracs(a["values"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad agent record {k}: {exc}") from exc
        if "reservation" in a:
            reservation = to_fraction(a["reservation"])
            endowments.append(None)
        elif "endowment" in a:
            reservation = Fraction(0)  # patched below
            endowments.append(fracs(a["endowment"]))
        else:
            raise ParseError(f"agent {name}: need 'reservation' or 'endowment'")
        agents.append(Agent(name, cap, utility, reservation))

    problem = AllocationProblem(objects, capacities, tuple(agents))
    if any(e is not None for e in endowments):
        if any(e is None for e in endowments):
            raise ParseError("mix of 'reservation' and 'endowment' agents")
        reservations = reservation_from_endowment(problem, endowments)
        problem = problem.with_reservations(reservations)

    cs = None
    if data.get("constraints"):
        cs = constraints_from_json(data["constraints"], problem)
        issues = cs.validate_against(problem)
        if issues:
            raise ParseError("; ".join(issues))
    return problem, cs


def problem_to_json(
    problem: AllocationProblem, cs: ConstraintStructure | None = None
) -> dict:
    data = {
        "objects": list(problem.objects),
        "capacities": [frac_str(q) for q in problem.capacities],
        "agents": [
            {
                "name": a.name,
                "cap": frac_str(a.cap),
                "values": [frac_str(v) for v in a.utility.values],
                "reservation": frac_str(a.reservation),
            }
            for a in problem.agents
        ],
    }
    if cs is not None and cs.constraints:
        data["constraints"] = [
            {
                "cells": [
                    [problem.agents[i].name, problem.objects[l]]
                    for (i, l) in sorted(c.cells)
                ],
                "floor": frac_str(c.floor),
                "ceiling": frac_str(c.ceiling),
            }
            for c in cs.constraints
        ]
    return data


def allocation_from_json(data, problem: AllocationProblem) -> Allocation:
    try:
        rows = data["rows"] if isinstance(data, dict) else data
        return Allocation(tuple(fracs(r) for r in rows))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad allocation: {exc}") from exc


def allocation_to_json(x: Allocation) -> dict:
    return {"rows": [[frac_str(v) for v in row] for row in x.rows]}
