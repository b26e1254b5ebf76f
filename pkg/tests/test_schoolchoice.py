from fractions import Fraction

import pytest

from fairalloc.model import ir_feasible, validate_problem
from fairalloc.schoolchoice import (
    District,
    DistrictError,
    DiversityBound,
    deferred_acceptance,
    district_from_json,
    district_to_problem,
    is_stable,
    normalized_values,
)

F = Fraction

PREFS = {"1": ("b", "c", "a"), "2": ("a", "b", "c"), "3": ("a", "c", "b")}


def _district(priorities):
    return District(
        schools=("a", "b", "c"),
        capacities=(1, 1, 1),
        students=("1", "2", "3"),
        preferences=PREFS,
        priorities=priorities,
    )


def test_priority_example_golden():
    d = _district({
        "a": ("2", "3", "1"), "b": ("2", "3", "1"), "c": ("3", "1", "2")
    })
    mu = deferred_acceptance(d)
    assert mu == {"1": "b", "2": "a", "3": "c"}
    assert is_stable(mu, d)


def test_priority_swap_makes_student_one_worse():
    d = _district({
        "a": ("1", "3", "2"), "b": ("2", "3", "1"), "c": ("3", "1", "2")
    })
    mu = deferred_acceptance(d)
    assert mu == {"1": "c", "2": "b", "3": "a"}
    assert is_stable(mu, d)


def test_single_student_single_school():
    d = District(("s",), (1,), ("kid",), {"kid": ("s",)}, {"s": ("kid",)})
    assert deferred_acceptance(d) == {"kid": "s"}


def test_stability_on_random_districts():
    import random

    rng = random.Random(8)
    for _ in range(40):
        n_schools = rng.randint(1, 4)
        n_students = rng.randint(1, 5)
        schools = tuple(f"s{k}" for k in range(n_schools))
        students = tuple(f"c{k}" for k in range(n_students))
        caps = tuple(rng.randint(0, 2) for _ in schools)
        prefs = {
            s: tuple(rng.sample(schools, n_schools)) for s in students
        }
        prios = {
            l: tuple(rng.sample(students, n_students)) for l in schools
        }
        d = District(schools, caps, students, prefs, prios)
        mu = deferred_acceptance(d)
        assert is_stable(mu, d)


def test_preference_ties_rejected():
    with pytest.raises(DistrictError):
        District(
            ("a", "b"), (1, 1), ("1",),
            {"1": ("a", "a")},
            {"a": ("1",), "b": ("1",)},
        )


def test_normalized_values_default_rank():
    d = _district({
        "a": ("2", "3", "1"), "b": ("2", "3", "1"), "c": ("3", "1", "2")
    })
    vals = normalized_values(d, "1")  # prefs b > c > a
    assert vals == (F(0), F(1), F(1, 2))


def test_normalized_values_user_supplied():
    d = District(
        ("a", "b"), (1, 1), ("1",),
        {"1": ("a", "b")},
        {"a": ("1",), "b": ("1",)},
        values={"1": (F(4), F(2))},
    )
    assert normalized_values(d, "1") == (F(1), F(0))


def test_values_must_follow_ordinal_list():
    d = District(
        ("a", "b"), (1, 1), ("1",),
        {"1": ("a", "b")},
        {"a": ("1",), "b": ("1",)},
        values={"1": (F(1), F(2))},
    )
    with pytest.raises(DistrictError):
        normalized_values(d, "1")


def test_uniform_lottery_reservations():
    d = _district({
        "a": ("2", "3", "1"), "b": ("2", "3", "1"), "c": ("3", "1", "2")
    })
    p, cs = district_to_problem(d)
    # omega = (1/3, 1/3, 1/3); normalized values average to 1/2
    assert [a.reservation for a in p.agents] == [F(1, 2)] * 3
    assert not validate_problem(p)
    ok, _ = ir_feasible(p, cs, F(0))
    assert ok


def test_neighborhood_boost_home_value():
    d = District(
        ("a", "b", "c"), (1, 1, 1), ("1", "2", "3"),
        preferences=PREFS,
        priorities={
            "a": ("2", "3", "1"), "b": ("2", "3", "1"), "c": ("3", "1", "2")
        },
        home_school={"1": "b", "2": "a", "3": "c"},
    )
    p, _ = district_to_problem(d, policy="neighborhood-boost", boost=F(1))
    # student 1 and 2 are endowed with their favorite school
    assert p.agents[0].reservation == F(1)
    assert p.agents[1].reservation == F(1)
    # student 3's home school c is her second choice
    assert p.agents[2].reservation == F(1, 2)


def test_diversity_floors_exceeding_capacity_rejected():
    d = District(
        ("a", "b"), (1, 2), ("1", "2", "3"),
        preferences={s: ("a", "b") for s in ("1", "2", "3")},
        priorities={"a": ("1", "2", "3"), "b": ("1", "2", "3")},
        types={"1": "t", "2": "t", "3": "t"},
        diversity=(DiversityBound("a", "t", F(2), F(2)),),
    )
    with pytest.raises(DistrictError):
        district_to_problem(d)


def test_diversity_becomes_constraints():
    d = District(
        ("a", "b"), (2, 1), ("1", "2", "3"),
        preferences={s: ("a", "b") for s in ("1", "2", "3")},
        priorities={"a": ("1", "2", "3"), "b": ("1", "2", "3")},
        types={"1": "x", "2": "x", "3": "y"},
        diversity=(DiversityBound("a", "x", F(0), F(1)),),
    )
    p, cs = district_to_problem(d)
    assert len(cs.constraints) == 1
    c = cs.constraints[0]
    assert c.cells == frozenset({(0, 0), (1, 0)})
    assert (c.floor, c.ceiling) == (F(0), F(1))


def test_district_from_json_roundtrip():
    data = {
        "schools": ["a", "b"],
        "capacities": [1, 1],
        "students": ["1", "2"],
        "preferences": {"1": ["a", "b"], "2": ["b", "a"]},
        "priorities": {"a": ["1", "2"], "b": ["2", "1"]},
    }
    d = district_from_json(data)
    assert deferred_acceptance(d) == {"1": "a", "2": "b"}
