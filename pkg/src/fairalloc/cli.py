"""Command line front end: solve, check, decompose, district, campaign.

All input and output is JSON.  Exit codes are a total function of the
audit verdicts: 0 success, 1 audit failure, 2 parse/usage error, 3
infeasible instance, 4 solver failure.
"""

from __future__ import annotations

import json
import os
import random
import sys
from dataclasses import dataclass
from fractions import Fraction

import click

from . import generators
from .constraints import ConstraintStructure
from .fairness import LPError, audit
from .kkm import KKMConfig, KKMSearchError, kkm_search
from .lottery import DecompositionError, bvn_decompose
from .market import (
    EquilibriumSearchError,
    MarketConfig,
    income_schedule,
    satiation_value,
    solve_equilibrium,
    verify_equilibrium,
)
from .model import InfeasibleError, ir_feasible, validate_problem
from .rationals import frac_str, to_fraction
from .schoolchoice import (
    DistrictError,
    deferred_acceptance,
    district_from_json,
    district_to_problem,
)
from .serialize import (
    ParseError,
    allocation_from_json,
    allocation_to_json,
    problem_from_json,
)

EXIT_OK = 0
EXIT_AUDIT_FAIL = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

CONFIG_ENV = "FAIRALLOC_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    method: str = "kkm"
    epsilon: Fraction = Fraction(1, 100)
    delta: Fraction | None = None
    seed: int = 0
    grid_depth: int = 4
    time_budget: float = 600.0
    starts: int = 8
    iterations: int = 400
    tol_cmp: Fraction = Fraction(1, 10**9)

    @staticmethod
    def load(path: str | None) -> "RunConfig":
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return RunConfig()
        with open(path) as fh:
            data = json.load(fh)
        kwargs = {}
        for key in ("method", "seed", "grid_depth", "starts", "iterations"):
            if key in data:
                kwargs[key] = data[key]
        for key in ("epsilon", "delta", "tol_cmp"):
            if key in data:
                kwargs[key] = to_fraction(data[key])
        if "time_budget" in data:
            kwargs["time_budget"] = float(data["time_budget"])
        return RunConfig(**kwargs)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE)


def _load_problem(path):
    data = _read_json(path)
    try:
        problem, cs = problem_from_json(data)
    except (ParseError, ValueError) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    issues = validate_problem(problem)
    if issues:
        if any("individually rational" in s for s in issues):
            click.echo("no IR allocation: " + "; ".join(issues), err=True)
            sys.exit(EXIT_INFEASIBLE)
        click.echo("invalid problem: " + "; ".join(issues), err=True)
        sys.exit(EXIT_PARSE)
    return problem, cs


def _emit(data, out):
    text = json.dumps(data, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@click.group()
def main():
    """Fair division solvers and exact allocation audits."""


@main.command()
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["kkm", "market"]), default=None)
@click.option("--epsilon", default=None, help="fairness tolerance (rational)")
@click.option("--seed", type=int, default=None)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", type=click.Path(), default=None)
def solve(problem_file, method, epsilon, seed, config, output):
    """Solve an allocation problem and audit the result."""
    cfg = RunConfig.load(config)
    method = method or cfg.method
    eps = to_fraction(epsilon) if epsilon is not None else cfg.epsilon
    seed = seed if seed is not None else cfg.seed
    problem, cs = _load_problem(problem_file)
    feasible, _ = ir_feasible(problem, cs, Fraction(0))
    if not feasible:
        click.echo("no IR allocation", err=True)
        sys.exit(EXIT_INFEASIBLE)

    if method == "kkm":
        kcfg = KKMConfig(
            epsilon=eps,
            delta=cfg.delta,
            grid_depth=cfg.grid_depth,
            seed=seed,
            time_budget=cfg.time_budget,
        )
        try:
            cert = kkm_search(problem, cs, kcfg)
        except KKMSearchError as exc:
            click.echo(f"solver failure: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        result = {
            "method": "kkm",
            "allocation": allocation_to_json(cert.allocation),
            "certificate": cert.to_json(),
            "audit": cert.report.to_json(),
        }
        passed = cert.certified
    else:
        if cs is not None and cs.constraints:
            click.echo(
                "market method does not support constraint structures",
                err=True,
            )
            sys.exit(EXIT_PARSE)
        mcfg = MarketConfig(
            starts=cfg.starts, iterations=cfg.iterations, seed=seed
        )
        try:
            eq = solve_equilibrium(problem, mcfg)
        except InfeasibleError as exc:
            click.echo(f"no IR allocation: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except EquilibriumSearchError as exc:
            click.echo(f"solver failure: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        report = verify_equilibrium(eq, problem)
        result = {
            "method": "market",
            "prices": [frac_str(p) for p in eq.prices.p],
            "incomes": eq.schedule.to_json(),
            "hypothesis_class": eq.hypothesis_class,
            "allocation": allocation_to_json(eq.allocation),
            "verification": report.to_json(),
        }
        passed = report.ok
    _emit(result, output)
    sys.exit(EXIT_OK if passed else EXIT_AUDIT_FAIL)


@main.command()
@click.argument("problem_file", type=click.Path(exists=True))
@click.argument("allocation_file", type=click.Path(exists=True))
@click.option("--epsilon", default="0")
@click.option("-o", "--output", type=click.Path(), default=None)
def check(problem_file, allocation_file, epsilon, output):
    """Audit an allocation: IR, justified envy, Pareto optimality."""
    problem, cs = _load_problem(problem_file)
    data = _read_json(allocation_file)
    try:
        x = allocation_from_json(data, problem)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    try:
        report = audit(x, problem, to_fraction(epsilon), cs)
    except LPError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    _emit(report.to_json(), output)
    sys.exit(EXIT_OK if report.passes else EXIT_AUDIT_FAIL)


@main.command()
@click.argument("problem_file", type=click.Path(exists=True))
@click.argument("allocation_file", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), default=None)
def decompose(problem_file, allocation_file, output):
    """Decompose a unit-demand allocation into a lottery."""
    problem, cs = _load_problem(problem_file)
    data = _read_json(allocation_file)
    try:
        x = allocation_from_json(data, problem)
        lot = bvn_decompose(x, problem, cs)
    except (ParseError, DecompositionError) as exc:
        click.echo(f"decomposition error: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    _emit(lot.to_json(), output)
    sys.exit(EXIT_OK)


@main.group()
def district():
    """School-district commands."""


@district.command("match")
@click.argument("district_file", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), default=None)
def district_match(district_file, output):
    """Student-optimal stable matching via deferred acceptance."""
    data = _read_json(district_file)
    try:
        d = district_from_json(data)
        mu = deferred_acceptance(d)
    except DistrictError as exc:
        click.echo(f"district error: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    _emit({"matching": mu}, output)
    sys.exit(EXIT_OK)


@district.command("solve")
@click.argument("district_file", type=click.Path(exists=True))
@click.option(
    "--policy",
    type=click.Choice(["uniform-lottery", "neighborhood-boost", "custom"]),
    default="uniform-lottery",
)
@click.option("--boost", default="1")
@click.option("--method", type=click.Choice(["kkm", "market"]), default="kkm")
@click.option("--epsilon", default="1/100")
@click.option("--lottery/--no-lottery", "want_lottery", default=True)
@click.option("-o", "--output", type=click.Path(), default=None)
def district_solve(district_file, policy, boost, method, epsilon, want_lottery, output):
    """Endowment lottery -> allocation problem -> solver -> lottery."""
    data = _read_json(district_file)
    try:
        d = district_from_json(data)
        endow = data.get("endowment")
        problem, cs = district_to_problem(
            d, policy, endowment=endow, boost=to_fraction(boost)
        )
    except (DistrictError, InfeasibleError) as exc:
        click.echo(f"district error: {exc}", err=True)
        sys.exit(EXIT_PARSE)
    eps = to_fraction(epsilon)
    if method == "kkm":
        try:
            cert = kkm_search(problem, cs, KKMConfig(epsilon=eps))
        except KKMSearchError as exc:
            click.echo(f"solver failure: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        x = cert.allocation
        result = {
            "allocation": allocation_to_json(x),
            "audit": cert.report.to_json(),
        }
        passed = cert.certified
    else:
        if cs.constraints:
            click.echo(
                "market method does not support diversity constraints",
                err=True,
            )
            sys.exit(EXIT_PARSE)
        try:
            eq = solve_equilibrium(problem)
        except (InfeasibleError, EquilibriumSearchError) as exc:
            click.echo(f"solver failure: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        x = eq.allocation
        report = verify_equilibrium(eq, problem)
        result = {
            "allocation": allocation_to_json(x),
            "prices": [frac_str(p) for p in eq.prices.p],
            "verification": report.to_json(),
        }
        passed = report.ok
    if want_lottery:
        try:
            result["lottery"] = bvn_decompose(x, problem, None).to_json()
        except DecompositionError as exc:
            result["lottery_error"] = str(exc)
    _emit(result, output)
    sys.exit(EXIT_OK if passed else EXIT_AUDIT_FAIL)


def _campaign_instance(rng, generator):
    if generator == "unit-demand":
        return generators.random_problem(rng, unit_demand=True)
    if generator == "large-caps":
        return generators.random_large_caps_problem(rng)
    if generator == "common-favorite":
        return generators.random_common_favorite_problem(rng)
    return generators.random_problem(rng)


@main.command()
@click.option(
    "--generator",
    type=click.Choice(
        ["general", "unit-demand", "large-caps", "common-favorite"]
    ),
    default="general",
)
@click.option("-n", "--instances", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.option("--max-agents", type=int, default=8)
@click.option("--max-objects", type=int, default=5)
@click.option("-o", "--output", type=click.Path(), default=None)
def campaign(generator, instances, seed, max_agents, max_objects, output):
    """Batch-verify income identities and monotonicity on random instances."""
    rng = random.Random(seed)
    counters = {
        "instances": 0,
        "price_points": 0,
        "income_identity_violations": 0,
        "income_bound_violations": 0,
        "ordering_violations": 0,
        "phi_monotonicity_violations": 0,
        "skipped_price_points": 0,
    }
    repro = []
    for k in range(instances):
        problem = _campaign_instance(rng, generator)
        counters["instances"] += 1
        for _ in range(3):
            prices = generators.random_prices(rng, problem.num_objects)
            try:
                sched = income_schedule(prices, problem)
            except ValueError:
                counters["skipped_price_points"] += 1
                continue
            counters["price_points"] += 1
            total = sum(a.income for a in sched.agents)
            supply = sum(
                p * q for p, q in zip(prices, problem.capacities)
            )
            if total != supply:
                counters["income_identity_violations"] += 1
                repro.append({"seed": seed, "instance": k, "law": "identity"})
            for a in sched.agents:
                if not (a.e_reservation <= a.income <= max(a.e_satiation, a.income)):
                    counters["income_bound_violations"] += 1
                    repro.append({"seed": seed, "instance": k, "law": "bounds"})
            # the poorer-agent law: strictly poorest incomes are pinned at
            # the other agent's reservation expenditure
            ag = sched.agents
            for i, ai in enumerate(ag):
                for j, aj in enumerate(ag):
                    if i == j:
                        continue
                    if ai.income < aj.income and ai.income < ai.e_satiation:
                        if aj.income != aj.e_reservation:
                            counters["ordering_violations"] += 1
                            repro.append(
                                {"seed": seed, "instance": k, "law": "poorer"}
                            )
            # phi monotonicity on an income grid
            prev = None
            supply_f = supply
            for t in range(0, 101, 10):
                m = Fraction(t, 100) * (supply_f + 1)
                val = sum(
                    min(max(m, a.e_reservation), a.e_satiation)
                    for a in sched.agents
                ) - supply_f
                if prev is not None and val < prev:
                    counters["phi_monotonicity_violations"] += 1
                    repro.append({"seed": seed, "instance": k, "law": "phi"})
                prev = val
    report = {
        "generator": generator,
        "seed": seed,
        "counters": counters,
        "violations": repro,
    }
    _emit(report, output)
    bad = any(v for key, v in counters.items() if key.endswith("violations"))
    sys.exit(EXIT_AUDIT_FAIL if bad else EXIT_OK)


if __name__ == "__main__":
    main()
