"""Welfare-weight search: regularized utilitarian map plus a simplicial
(Sperner-style) search for weights whose allocation certifies as
epsilon-IR, epsilon-PO and free of equal-type epsilon-justified envy.

The inner map maximizes a strictly concave objective (weighted utilities
minus a small Euclidean regularizer) over the epsilon-IR feasible
polytope; it is solved as a second-order cone program in floats.  Nothing
downstream trusts the float solution: every candidate is snapped onto a
rational grid and must pass the exact audits before it is returned.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import cvxpy as cp
import numpy as np

from .constraints import ConstraintStructure, type_partition
from .fairness import FairnessReport, audit
from .model import Allocation, AllocationProblem, ir_feasible
from .rationals import frac_str, fracs, snap_matrix_to_grid, to_fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class KKMSearchError(RuntimeError):
    def __init__(self, message: str, best: "KKMCertificate | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class WelfareWeights:
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", fracs(self.weights))
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if sum(self.weights) != 1:
            raise ValueError("weights must sum to one")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, w in enumerate(self.weights) if w > 0)

    def __iter__(self):
        return iter(self.weights)


def admissible_delta(epsilon: Fraction, problem: AllocationProblem) -> Fraction:
    """A regularizer weight delta with
    delta * sum_i (||ones|| + c^i) < epsilon, using L >= sqrt(L) as the
    rational bound for the norm of the all-ones vector."""
    eps = to_fraction(epsilon)
    bound = sum(
        (Fraction(problem.num_objects) + c for c in problem.caps), ZERO
    )
    return eps / (2 * bound)


@dataclass(frozen=True)
class KKMConfig:
    epsilon: Fraction = Fraction(1, 100)
    delta: Fraction | None = None  # derived from epsilon when absent
    grid_depth: int = 4
    tol_obj: float = 1e-8
    seed: int = 0
    audit_denominator: int = 10**6
    time_budget: float = 600.0

    def delta_for(self, problem: AllocationProblem) -> Fraction:
        if self.delta is not None:
            d = to_fraction(self.delta)
            bound = sum(
                (Fraction(problem.num_objects) + c for c in problem.caps), ZERO
            )
            if d * bound >= to_fraction(self.epsilon):
                raise ValueError("delta too large for epsilon (regularizer bound)")
            return d
        return admissible_delta(self.epsilon, problem)


@dataclass(frozen=True)
class KKMCertificate:
    weights: WelfareWeights
    allocation: Allocation
    report: FairnessReport
    epsilon: Fraction
    memberships: tuple[bool, ...]  # per-agent: no equal-type eps-justified envy

    @property
    def certified(self) -> bool:
        return (
            self.report.ir_ok
            and self.report.pareto.holds
            and all(self.memberships)
        )

    def to_json(self) -> dict:
        return {
            "weights": [frac_str(w) for w in self.weights],
            "allocation": [
                [frac_str(v) for v in row] for row in self.allocation.rows
            ],
            "epsilon": frac_str(self.epsilon),
            "memberships": list(self.memberships),
            "audit": self.report.to_json(),
            "certified": self.certified,
        }


class _PhiSolver:
    """Caches the cvxpy program; re-solves per weight vector."""

    def __init__(
        self,
        problem: AllocationProblem,
        cs: ConstraintStructure | None,
        cfg: KKMConfig,
    ):
        self.problem = problem
        self.cs = cs
        self.cfg = cfg
        self.delta = float(cfg.delta_for(problem))
        n, L = problem.num_agents, problem.num_objects
        # search inside the epsilon/2-IR set: a subset of the epsilon-IR
        # set, leaving slack for float error and grid snapping so the
        # exact audit never fails on the IR boundary
        self.eps_inner = to_fraction(cfg.epsilon) / 2
        feasible, _ = ir_feasible(problem, cs, self.eps_inner)
        if not feasible:
            self.eps_inner = to_fraction(cfg.epsilon)
            feasible, _ = ir_feasible(problem, cs, self.eps_inner)
            if not feasible:
                raise KKMSearchError("epsilon-IR feasible set is empty")
        self._x = cp.Variable((n, L), nonneg=True)
        self._lam = cp.Parameter(n, nonneg=True)
        values = np.array(
            [[float(v) for v in a.utility.values] for a in problem.agents]
        )
        caps = np.array([float(c) for c in problem.caps])
        q = np.array([float(v) for v in problem.capacities])
        reservations = np.array([float(a.reservation) for a in problem.agents])
        eps = float(self.eps_inner)
        cons = [
            cp.sum(self._x, axis=1) <= caps,
            cp.sum(self._x, axis=0) == q,
            cp.sum(cp.multiply(values, self._x), axis=1) >= reservations - eps,
        ]
        if cs is not None:
            for c in cs.constraints:
                expr = sum(self._x[i, l] for (i, l) in sorted(c.cells))
                cons.append(expr <= float(c.ceiling))
                cons.append(expr >= float(c.floor))
        weighted = cp.sum(
            cp.multiply(self._lam, cp.sum(cp.multiply(values, self._x), axis=1))
        )
        regularizer = cp.sum(cp.norm(self._x - 1.0, 2, axis=1))
        self._prob = cp.Problem(cp.Maximize(weighted - self.delta * regularizer), cons)
        self._cache: dict[tuple[Fraction, ...], np.ndarray] = {}

    def solve(self, lam: WelfareWeights) -> np.ndarray:
        key = lam.weights
        if key in self._cache:
            return self._cache[key]
        self._lam.value = np.array([float(w) for w in lam])
        solved = False
        for solver, kwargs in (
            (cp.CLARABEL, {}),
            (cp.ECOS, {"abstol": self.cfg.tol_obj, "reltol": self.cfg.tol_obj}),
            (cp.SCS, {"eps": 1e-9}),
        ):
            try:
                self._prob.solve(solver=solver, **kwargs)
            except (cp.SolverError, Exception):
                continue
            if self._prob.status in ("optimal", "optimal_inaccurate"):
                solved = True
                break
        if not solved:
            raise KKMSearchError(f"inner solver failed: {self._prob.status}")
        x = np.clip(np.asarray(self._x.value, dtype=float), 0.0, None)
        self._cache[key] = x
        return x

    def objective_value(self, lam: WelfareWeights, rows) -> float:
        values = [
            [float(v) for v in a.utility.values] for a in self.problem.agents
        ]
        total = 0.0
        for i, row in enumerate(rows):
            rf = [float(v) for v in row]
            total += float(lam.weights[i]) * sum(
                v * x for v, x in zip(values[i], rf)
            )
            total -= self.delta * math.sqrt(sum((x - 1.0) ** 2 for x in rf))
        return total


def phi(
    lam: WelfareWeights,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    cfg: KKMConfig,
    solver: _PhiSolver | None = None,
) -> Allocation:
    """The regularized weighted-utilitarian maximizer over the epsilon-IR
    polytope, snapped to the audit grid (exact clearing, caps intact)."""
    solver = solver or _PhiSolver(problem, cs, cfg)
    xf = solver.solve(lam)
    denom = cfg.audit_denominator
    for v in itertools.chain(problem.capacities, problem.caps):
        denom = denom * v.denominator // math.gcd(denom, v.denominator)
    if cs is not None:
        for c in cs.constraints:
            for b in (c.floor, c.ceiling):
                denom = denom * b.denominator // math.gcd(denom, b.denominator)
    rows = snap_matrix_to_grid(
        xf.tolist(), problem.capacities, problem.caps, denom
    )
    return _symmetrize(Allocation(rows), problem, cs)


def _identity_key(i: int, problem: AllocationProblem, cs):
    a = problem.agents[i]
    sections = (
        tuple(c.section(i) for c in cs.constraints) if cs is not None else ()
    )
    return (a.cap, a.utility.values, a.reservation, sections)


def _average_rows(x: Allocation, group) -> Allocation:
    k = len(group)
    L = len(x.rows[0])
    avg = tuple(
        sum((x.rows[i][l] for i in group), ZERO) / k for l in range(L)
    )
    rows = list(x.rows)
    for i in group:
        rows[i] = avg
    return Allocation(tuple(rows))


def _symmetrize(
    x: Allocation, problem: AllocationProblem, cs: ConstraintStructure | None
) -> Allocation:
    """Average rows of identical agents (same cap, utility, reservation and
    constraint sections).  Grid snapping breaks exact symmetry by a few
    grid units; averaging restores it and preserves caps, clearing, and
    every constraint cell sum."""
    groups: dict = {}
    for i in range(problem.num_agents):
        groups.setdefault(_identity_key(i, problem, cs), []).append(i)
    for group in groups.values():
        if len(group) > 1:
            x = _average_rows(x, group)
    return x


def _repair_tiny_envy(
    x: Allocation,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    epsilon: Fraction,
) -> Allocation:
    """Average away residual equal-type justified envy with tiny gaps.

    Tiny gaps are solver/snapping noise around an envy boundary of the
    true optimum.  Averaging an equal-type pair is always feasible (cell
    sums and caps preserved), keeps epsilon-IR (the envied agent's value
    of the envier's bundle is at least her reservation minus epsilon),
    and equalizes the pair.  Bounded number of passes; the exact audit
    afterwards remains the only acceptance gate.
    """
    from .fairness import check_pairwise_envy

    threshold = to_fraction(epsilon) / 4
    structure = cs if cs is not None else ConstraintStructure(())

    def swap_key(i):
        a = problem.agents[i]
        sections = (
            tuple(c.section(i) for c in cs.constraints)
            if cs is not None
            else ()
        )
        return (a.cap, sections)

    for _ in range(problem.num_agents**2):
        facts = check_pairwise_envy(x, problem, epsilon, structure)
        tiny = [
            f
            for f in facts
            if f.is_eps_justified and f.gap <= threshold
        ]
        if not tiny:
            break
        # average whole components at once: pairwise averaging of
        # overlapping pairs only converges in the limit
        adjacency: dict[int, set] = {}
        for f in tiny:
            if swap_key(f.envier) == swap_key(f.envied):
                adjacency.setdefault(f.envier, set()).add(f.envied)
                adjacency.setdefault(f.envied, set()).add(f.envier)
        if not adjacency:
            break
        seen: set = set()
        for root in sorted(adjacency):
            if root in seen:
                continue
            comp = {root}
            frontier = [root]
            while frontier:
                for nxt in adjacency.get(frontier.pop(), ()):
                    if nxt not in comp:
                        comp.add(nxt)
                        frontier.append(nxt)
            seen |= comp
            if len(comp) > 1:
                x = _average_rows(x, sorted(comp))
    return x


def _egalitarian_candidate(
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    cfg: KKMConfig,
) -> Allocation | None:
    """Max-min IR slack, then a utilitarian polish, both as exact LPs.

    When the epsilon-IR polytope is thin (reservations nearly exhaust the
    supply) the welfare maximizer's linear selection jumps between extreme
    vertices for every grid weight and no refinement settles; the
    egalitarian point is the canonical candidate there.
    """
    from .model import allocation_lp_rows
    from .simplexlp import solve_lp

    eps = to_fraction(cfg.epsilon)
    n, L = problem.num_agents, problem.num_objects
    nvars = n * L
    a_ub, b_ub, a_eq, b_eq = allocation_lp_rows(problem, cs)
    # stage 1: maximize t with u_i(x_i) >= reservation_i + t, t >= -eps
    a_ub1 = [row + [ZERO] for row in a_ub]
    a_eq1 = [row + [ZERO] for row in a_eq]
    for i, agent in enumerate(problem.agents):
        row = [ZERO] * (nvars + 1)
        for l in range(L):
            row[i * L + l] = -agent.utility.values[l]
        row[nvars] = ONE  # t = t_shifted - eps
        a_ub1.append(row)
        b_ub.append(-agent.reservation + eps)
    c = [ZERO] * nvars + [ONE]
    res = solve_lp(c, a_ub1, b_ub, a_eq1, b_eq)
    if not res.optimal:
        return None
    slack = res.x[nvars] - eps
    # stage 2: maximize total utility holding the floor at the optimum
    a_ub2, b_ub2, a_eq2, b_eq2 = allocation_lp_rows(problem, cs)
    for i, agent in enumerate(problem.agents):
        row = [ZERO] * nvars
        for l in range(L):
            row[i * L + l] = -agent.utility.values[l]
        a_ub2.append(row)
        b_ub2.append(-agent.reservation - slack)
    c = [ZERO] * nvars
    for i, agent in enumerate(problem.agents):
        for l in range(L):
            c[i * L + l] += agent.utility.values[l]
    res = solve_lp(c, a_ub2, b_ub2, a_eq2, b_eq2)
    if not res.optimal:
        return None
    rows = tuple(
        tuple(res.x[i * L + l] for l in range(L)) for i in range(n)
    )
    return _symmetrize(Allocation(rows), problem, cs)


def _equal_type_envy_free(
    i: int,
    x: Allocation,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    epsilon: Fraction,
) -> bool:
    from .fairness import check_pairwise_envy

    facts = check_pairwise_envy(
        x, problem, epsilon, cs if cs is not None else ConstraintStructure(())
    )
    return not any(f.envier == i and f.is_eps_justified for f in facts)


def lambda_membership(
    i: int,
    lam: WelfareWeights,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    cfg: KKMConfig,
    solver: _PhiSolver | None = None,
) -> bool:
    """lambda in Lambda^i: agent i has no equal-type epsilon-justified envy
    at phi(lambda)."""
    x = phi(lam, problem, cs, cfg, solver)
    return _equal_type_envy_free(i, x, problem, cs, to_fraction(cfg.epsilon))


def _certificate_for(
    lam: WelfareWeights,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    cfg: KKMConfig,
    solver: _PhiSolver,
) -> KKMCertificate:
    x = phi(lam, problem, cs, cfg, solver)
    return _certify_allocation(lam, x, problem, cs, cfg)


def _certify_allocation(
    lam: WelfareWeights,
    x: Allocation,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    cfg: KKMConfig,
) -> KKMCertificate:
    eps = to_fraction(cfg.epsilon)
    x = _repair_tiny_envy(x, problem, cs, eps)
    report = audit(
        x,
        problem,
        eps,
        cs if cs is not None else ConstraintStructure(()),
        pareto_mode="ePO",
    )
    memberships = tuple(
        not any(
            f.envier == i and f.is_eps_justified for f in report.envy_facts
        )
        for i in range(problem.num_agents)
    )
    return KKMCertificate(lam, x, report, eps, memberships)


def _label(
    lam: WelfareWeights,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    cfg: KKMConfig,
    solver: _PhiSolver,
) -> tuple[int, KKMCertificate]:
    """Sperner label: the smallest supported agent index whose membership
    holds (guaranteed to exist; numerical failures fall back to the least
    violating supported agent)."""
    cert = _certificate_for(lam, problem, cs, cfg, solver)
    for i in lam.support:
        if cert.memberships[i]:
            return i, cert
    return lam.support[0], cert


def _grid_weights(units: tuple[int, ...], m: int) -> WelfareWeights:
    return WelfareWeights(tuple(Fraction(u, m) for u in units))


def _kuhn_cells(m: int, n: int):
    """Cells of the Kuhn/Freudenthal triangulation of the simplex grid at
    resolution m, as (n)-tuples of integer composition vertices.

    Uses the staircase coordinates y_k = sum of the last n-k weights; each
    cell is a base point plus a permutation of unit steps.
    """
    if n == 1:
        yield ((m,),)
        return
    d = n - 1
    for z in itertools.product(range(m), repeat=d):
        if any(z[k] < z[k + 1] for k in range(d - 1)):
            continue
        for perm in itertools.permutations(range(d)):
            ys = [list(z)]
            ok = True
            for step in perm:
                nxt = list(ys[-1])
                nxt[step] += 1
                ys.append(nxt)
            for y in ys:
                if any(y[k] < y[k + 1] for k in range(d - 1)) or y[0] > m:
                    ok = False
                    break
            if not ok:
                continue
            cell = []
            for y in ys:
                units = [m - y[0]] + [
                    y[k] - y[k + 1] for k in range(d - 1)
                ] + [y[d - 1]]
                cell.append(tuple(units))
            yield tuple(cell)


def kkm_search(
    problem: AllocationProblem,
    cs: ConstraintStructure | None = None,
    cfg: KKMConfig = KKMConfig(),
) -> KKMCertificate:
    """Simplicial search for certified welfare weights.

    The barycenter is tried first; then Kuhn-triangulation refinements,
    auditing every vertex allocation and the barycenter of each fully
    labeled cell.  The exact rational audit is the only acceptance gate.
    """
    n = problem.num_agents
    solver = _PhiSolver(problem, cs, cfg)
    deadline = time.monotonic() + cfg.time_budget
    best: KKMCertificate | None = None

    def consider(cert: KKMCertificate) -> bool:
        nonlocal best
        if cert.certified:
            return True
        if best is None or _score(cert) < _score(best):
            best = cert
        return False

    def _score(cert: KKMCertificate):
        envy = sum(1 for ok in cert.memberships if not ok)
        return (envy, not cert.report.ir_ok, not cert.report.pareto.holds)

    bary = WelfareWeights(tuple(Fraction(1, n) for _ in range(n)))
    cert = _certificate_for(bary, problem, cs, cfg, solver)
    if consider(cert):
        return cert
    egal = _egalitarian_candidate(problem, cs, cfg)
    if egal is not None:
        cert = _certify_allocation(bary, egal, problem, cs, cfg)
        if consider(cert):
            return cert
    if n == 1:
        raise KKMSearchError("single-agent instance failed audit", best)

    labels: dict[tuple[int, ...], int] = {}
    for depth in range(1, cfg.grid_depth + 1):
        m = 2**depth
        for cell in _kuhn_cells(m, n):
            if time.monotonic() > deadline:
                raise KKMSearchError("time budget exhausted", best)
            seen = set()
            for units in cell:
                if units not in labels:
                    lam = _grid_weights(units, m)
                    lab, cert = _label(lam, problem, cs, cfg, solver)
                    if consider(cert):
                        return cert
                    labels[units] = lab
                seen.add(labels[units])
            if len(seen) == n:
                lam = WelfareWeights(
                    tuple(
                        Fraction(sum(u[i] for u in cell), m * n)
                        for i in range(n)
                    )
                )
                cert = _certificate_for(lam, problem, cs, cfg, solver)
                if consider(cert):
                    return cert
        labels = {
            tuple(2 * u for u in units): lab for units, lab in labels.items()
        }
    raise KKMSearchError("refinement budget exhausted", best)


@dataclass(frozen=True)
class KKMTrajectory:
    certificates: tuple[KKMCertificate, ...]
    final_report: FairnessReport
    cauchy_gaps: tuple[Fraction, ...]

    @property
    def allocation(self) -> Allocation:
        return self.certificates[-1].allocation


def kkm_limit(
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
    schedule,
    base_cfg: KKMConfig = KKMConfig(),
    tol_cmp: Fraction = Fraction(1, 10**9),
) -> KKMTrajectory:
    """Run the search along a decreasing epsilon schedule, reporting the
    trajectory's sup-distance steps and the limit-style audit of the last
    iterate (IR / wPO / no strong justified envy at tol_cmp)."""
    certs = []
    for eps in schedule:
        cfg = replace(base_cfg, epsilon=to_fraction(eps), delta=None)
        certs.append(kkm_search(problem, cs, cfg))
    gaps = []
    for a, b in zip(certs, certs[1:]):
        gaps.append(
            max(
                abs(u - v)
                for ra, rb in zip(a.allocation.rows, b.allocation.rows)
                for u, v in zip(ra, rb)
            )
        )
    last = certs[-1].allocation
    report = audit(
        last,
        problem,
        to_fraction(tol_cmp),
        cs if cs is not None else ConstraintStructure(()),
        pareto_mode="wPO",
    )
    return KKMTrajectory(tuple(certs), report, tuple(gaps))
