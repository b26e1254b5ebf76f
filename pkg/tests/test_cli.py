import json
import os

import pytest
from click.testing import CliRunner

from fairalloc.cli import main

DATA = os.path.join(os.path.dirname(__file__), "data")
ECONOMY = os.path.join(DATA, "example_economy.json")
ALLOCATION = os.path.join(DATA, "example_allocation.json")
DISTRICT = os.path.join(DATA, "district_priority.json")


@pytest.fixture()
def runner():
    return CliRunner()


def _invoke(runner, args):
    result = runner.invoke(main, args)
    return result


def test_check_example_passes(runner):
    result = _invoke(runner, ["check", ECONOMY, ALLOCATION])
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert report["ir"]["slacks"] == ["1", "0", "7/6", "7/6", "7/6"]
    assert report["passes"]
    assert len(report["envy_facts"]) == 1
    fact = report["envy_facts"][0]
    assert (fact["envier"], fact["envied"]) == (0, 1)
    assert fact["justification"] == "unjustified"


def test_check_endowment_allocation_fails_pareto(runner, tmp_path):
    # handing everyone their endowment is IR but not Pareto optimal
    with open(ECONOMY) as fh:
        econ = json.load(fh)
    rows = [a["endowment"] for a in econ["agents"]]
    path = tmp_path / "endow.json"
    path.write_text(json.dumps({"rows": rows}))
    result = _invoke(runner, ["check", ECONOMY, str(path)])
    assert result.exit_code == 1
    report = json.loads(result.output)
    assert report["ir"]["ok"]
    assert not report["pareto"]["holds"]


def test_check_malformed_json_exit_2(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    result = _invoke(runner, ["check", str(path), ALLOCATION])
    assert result.exit_code == 2


def test_solve_kkm_example(runner):
    result = _invoke(runner, ["solve", ECONOMY, "--method", "kkm"])
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert out["certificate"]["certified"]


def test_solve_market_example(runner):
    result = _invoke(runner, ["solve", ECONOMY, "--method", "market"])
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert out["verification"]["ok"]


def test_solve_infeasible_exit_3(runner, tmp_path):
    data = {
        "objects": ["x"],
        "capacities": ["1"],
        "agents": [
            {"name": "a", "cap": 1, "values": ["1"], "reservation": "1"},
            {"name": "b", "cap": 1, "values": ["1"], "reservation": "1"},
        ],
    }
    path = tmp_path / "infeasible.json"
    path.write_text(json.dumps(data))
    result = _invoke(runner, ["solve", str(path)])
    assert result.exit_code == 3


def test_decompose_example(runner):
    result = _invoke(runner, ["decompose", ECONOMY, ALLOCATION])
    assert result.exit_code == 0
    from fractions import Fraction

    lot = json.loads(result.output)
    assert sum(Fraction(w) for w in lot["weights"]) == 1


def test_district_match_golden(runner):
    result = _invoke(runner, ["district", "match", DISTRICT])
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert out["matching"] == {"1": "b", "2": "a", "3": "c"}


def test_district_solve(runner):
    result = _invoke(runner, ["district", "solve", DISTRICT, "--no-lottery"])
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert out["audit"]["passes"]


def test_campaign_deterministic(runner):
    args = ["campaign", "-n", "20", "--seed", "5"]
    r1 = _invoke(runner, args)
    r2 = _invoke(runner, args)
    assert r1.exit_code == 0
    assert r1.output == r2.output
    report = json.loads(r1.output)
    assert report["counters"]["income_identity_violations"] == 0
    assert report["violations"] == []


def test_config_file_respected(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "market", "seed": 3}))
    result = _invoke(runner, ["solve", ECONOMY, "--config", str(cfg)])
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert out["method"] == "market"
