"""School choice adapter: districts, deferred acceptance, and the bridge
from endowment lotteries to allocation problems with diversity bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .constraints import Constraint, ConstraintStructure
from .model import (
    Agent,
    AllocationProblem,
    LinearUtility,
    reservation_from_endowment,
    validate_problem,
)
from .rationals import fracs, to_fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class DistrictError(ValueError):
    pass


@dataclass(frozen=True)
class DiversityBound:
    """A floor/ceiling on how many students of one type a school admits."""

    school: str
    type_label: str
    floor: Fraction
    ceiling: Fraction

    def __post_init__(self):
        object.__setattr__(self, "floor", to_fraction(self.floor))
        object.__setattr__(self, "ceiling", to_fraction(self.ceiling))


@dataclass(frozen=True)
class District:
    schools: tuple[str, ...]
    capacities: tuple[Fraction, ...]
    students: tuple[str, ...]
    preferences: dict[str, tuple[str, ...]] = field(default_factory=dict)
    priorities: dict[str, tuple[str, ...]] = field(default_factory=dict)
    values: dict[str, tuple[Fraction, ...]] = field(default_factory=dict)
    types: dict[str, str] = field(default_factory=dict)
    home_school: dict[str, str] = field(default_factory=dict)
    diversity: tuple[DiversityBound, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "capacities", fracs(self.capacities))
        if len(self.schools) != len(set(self.schools)):
            raise DistrictError("duplicate school names")
        if len(self.students) != len(set(self.students)):
            raise DistrictError("duplicate student names")
        for q in self.capacities:
            if q < 0 or q.denominator != 1:
                raise DistrictError("capacities must be nonnegative integers")
        for s, prefs in self.preferences.items():
            if s not in self.students:
                raise DistrictError(f"preferences for unknown student {s}")
            if sorted(prefs) != sorted(self.schools):
                raise DistrictError(
                    f"student {s}: preference list must rank every school "
                    "exactly once (ties and omissions rejected)"
                )
        for l, order in self.priorities.items():
            if l not in self.schools:
                raise DistrictError(f"priority order for unknown school {l}")
            if sorted(order) != sorted(self.students):
                raise DistrictError(
                    f"school {l}: priority must rank every student exactly once"
                )


def normalized_values(d: District, student: str) -> tuple[Fraction, ...]:
    """vNM values over schools in district order, normalized so the
    favorite school has value 1 and the worst has value 0.

    Supplied values must be strictly decreasing along the student's
    preference list; absent values fall back to evenly spaced ranks.
    """
    prefs = d.preferences.get(student)
    if not prefs:
        raise DistrictError(f"student {student} has no preference list")
    K = len(prefs)
    if student in d.values:
        raw = fracs(d.values[student])
        if len(raw) != K:
            raise DistrictError(
                f"student {student}: values must align with the school list"
            )
        by_school = dict(zip(d.schools, raw))
        ranked = [by_school[l] for l in prefs]
        for a, b in zip(ranked, ranked[1:]):
            if a <= b:
                raise DistrictError(
                    f"student {student}: values must strictly follow the "
                    "ordinal preference list"
                )
        top, bottom = ranked[0], ranked[-1]
        if K == 1:
            return (ONE,)
        span = top - bottom
        return tuple((by_school[l] - bottom) / span for l in d.schools)
    if K == 1:
        return (ONE,)
    rank = {l: k for k, l in enumerate(prefs)}
    return tuple(Fraction(K - 1 - rank[l], K - 1) for l in d.schools)


def deferred_acceptance(d: District) -> dict[str, str | None]:
    """Student-proposing deferred acceptance; returns the student-optimal
    stable matching (None for unmatched students)."""
    for l in d.schools:
        if l not in d.priorities:
            raise DistrictError(f"school {l} has no priority order")
    for s in d.students:
        if s not in d.preferences:
            raise DistrictError(f"student {s} has no preference list")
    rank = {
        l: {s: k for k, s in enumerate(d.priorities[l])} for l in d.schools
    }
    caps = {l: int(q) for l, q in zip(d.schools, d.capacities)}
    next_choice = {s: 0 for s in d.students}
    held: dict[str, list[str]] = {l: [] for l in d.schools}
    free = list(d.students)
    while free:
        s = free.pop(0)
        prefs = d.preferences[s]
        if next_choice[s] >= len(prefs):
            continue  # exhausted list; stays unmatched
        l = prefs[next_choice[s]]
        next_choice[s] += 1
        held[l].append(s)
        held[l].sort(key=lambda t: rank[l][t])
        if len(held[l]) > caps[l]:
            rejected = held[l].pop()
            free.append(rejected)
    matching: dict[str, str | None] = {s: None for s in d.students}
    for l, students in held.items():
        for s in students:
            matching[s] = l
    return matching


def is_stable(matching: dict, d: District) -> bool:
    """No student-school blocking pair and no capacity violation."""
    caps = {l: int(q) for l, q in zip(d.schools, d.capacities)}
    filled: dict[str, list[str]] = {l: [] for l in d.schools}
    for s, l in matching.items():
        if l is not None:
            filled[l].append(s)
    if any(len(filled[l]) > caps[l] for l in d.schools):
        return False
    rank = {
        l: {s: k for k, s in enumerate(d.priorities[l])} for l in d.schools
    }
    for s in d.students:
        prefs = d.preferences[s]
        current = matching[s]
        cutoff = prefs.index(current) if current is not None else len(prefs)
        for l in prefs[:cutoff]:
            if len(filled[l]) < caps[l]:
                return False
            if any(rank[l][s] < rank[l][t] for t in filled[l]):
                return False
    return True


def _uniform_endowment(d: District):
    total = sum(d.capacities)
    if total == 0:
        raise DistrictError("district has zero total capacity")
    return [
        [q / total for q in d.capacities] for _ in d.students
    ]


def _boost_endowment(d: District, boost: Fraction):
    base = _uniform_endowment(d)
    rows = []
    for s, row in zip(d.students, base):
        home = d.home_school.get(s)
        if home is None:
            raise DistrictError(f"student {s} has no home school")
        h = d.schools.index(home)
        rows.append(
            [
                boost * (ONE if l == h else ZERO) + (1 - boost) * v
                for l, v in enumerate(row)
            ]
        )
    return rows


def _diversity_constraints(d: District) -> ConstraintStructure:
    idx = {s: i for i, s in enumerate(d.students)}
    obj = {l: k for k, l in enumerate(d.schools)}
    constraints = []
    floors: dict[str, Fraction] = {}
    for b in d.diversity:
        if b.school not in obj:
            raise DistrictError(f"diversity bound on unknown school {b.school}")
        members = [
            idx[s] for s in d.students if d.types.get(s) == b.type_label
        ]
        if not members:
            raise DistrictError(
                f"diversity bound on empty type {b.type_label!r}"
            )
        constraints.append(
            Constraint(
                frozenset((i, obj[b.school]) for i in members),
                b.floor,
                b.ceiling,
            )
        )
        floors[b.school] = floors.get(b.school, ZERO) + b.floor
    for school, total in floors.items():
        if total > d.capacities[obj[school]]:
            raise DistrictError(
                f"diversity floors at school {school} exceed its capacity"
            )
    return ConstraintStructure(tuple(constraints))


def district_to_problem(
    d: District,
    policy: str = "uniform-lottery",
    endowment=None,
    boost: Fraction = ONE,
) -> tuple[AllocationProblem, ConstraintStructure]:
    """Build a unit-demand allocation problem whose reservations come from
    an endowment lottery.

    policy: "uniform-lottery" (capacity-proportional), "neighborhood-boost"
    (probability `boost` on the home school, remainder uniform), or
    "custom" with explicit endowment rows.
    """
    if policy == "uniform-lottery":
        rows = _uniform_endowment(d)
    elif policy == "neighborhood-boost":
        b = to_fraction(boost)
        if not (0 <= b <= 1):
            raise DistrictError("boost must lie in [0, 1]")
        rows = _boost_endowment(d, b)
    elif policy == "custom":
        if endowment is None:
            raise DistrictError("custom policy needs explicit endowment rows")
        rows = [list(fracs(r)) for r in endowment]
    else:
        raise DistrictError(f"unknown endowment policy {policy!r}")

    agents = tuple(
        Agent(s, ONE, LinearUtility(normalized_values(d, s)), ZERO)
        for s in d.students
    )
    problem = AllocationProblem(d.schools, d.capacities, agents)
    reservations = reservation_from_endowment(problem, rows)
    problem = problem.with_reservations(reservations)
    issues = validate_problem(problem)
    if issues:
        raise DistrictError("; ".join(issues))
    return problem, _diversity_constraints(d)


def district_from_json(data: dict) -> District:
    try:
        return District(
            schools=tuple(data["schools"]),
            capacities=fracs(data["capacities"]),
            students=tuple(data["students"]),
            preferences={
                s: tuple(p) for s, p in data.get("preferences", {}).items()
            },
            priorities={
                l: tuple(p) for l, p in data.get("priorities", {}).items()
            },
            values={s: fracs(v) for s, v in data.get("values", {}).items()},
            types=dict(data.get("types", {})),
            home_school=dict(data.get("home_school", {})),
            diversity=tuple(
                DiversityBound(
                    b["school"],
                    b["type"],
                    to_fraction(b["floor"]),
                    to_fraction(b["ceiling"]),
                )
                for b in data.get("diversity", [])
            ),
        )
    except (KeyError, TypeError) as exc:
        raise DistrictError(f"bad district spec: {exc}") from exc
