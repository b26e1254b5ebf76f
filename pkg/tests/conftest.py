import json
import os

import pytest

from fairalloc.serialize import allocation_from_json, problem_from_json

DATA = os.path.join(os.path.dirname(__file__), "data")


def load_json(name):
    with open(os.path.join(DATA, name)) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def example_problem():
    problem, _ = problem_from_json(load_json("example_economy.json"))
    return problem


@pytest.fixture(scope="session")
def example_allocation(example_problem):
    return allocation_from_json(
        load_json("example_allocation.json"), example_problem
    )
