"""Pseudo-market equilibrium with price-dependent incomes.

Income construction: each agent's income is the median of a common level
m, the minimum expenditure reaching her reservation utility, and the
minimum expenditure reaching satiation; the common level is pinned down by
requiring incomes to add up to the value of the supply.  Equilibria are
searched by damped tatonnement in floats, then certified exactly: prices
are snapped to small-denominator rationals, incomes and demand utilities
recomputed in rational arithmetic, and supply = demand re-established by
an exact feasibility LP inside the agents' demand sets.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .fairness import FairnessReport, audit
from .model import Allocation, AllocationProblem, ir_feasible
from .rationals import dot, frac_str, fracs, to_fraction
from .simplexlp import solve_lp

ZERO = Fraction(0)
ONE = Fraction(1)


class UnreachableUtilityError(ValueError):
    """Expenditure target above the satiation utility."""


class EquilibriumSearchError(RuntimeError):
    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class PriceVector:
    p: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", fracs(self.p))
        if any(v < 0 for v in self.p):
            raise ValueError("prices must be nonnegative")
        if sum(self.p) != 1:
            raise ValueError("prices must sum to one")

    def __iter__(self):
        return iter(self.p)

    def __getitem__(self, l):
        return self.p[l]

    def __len__(self):
        return len(self.p)


@dataclass(frozen=True)
class AgentIncome:
    e_reservation: Fraction
    e_satiation: Fraction
    income: Fraction


@dataclass(frozen=True)
class IncomeSchedule:
    agents: tuple[AgentIncome, ...]
    regime: str  # "surplus" | "root"
    root: Fraction | None  # common level m* in root regime

    @property
    def incomes(self) -> tuple[Fraction, ...]:
        return tuple(a.income for a in self.agents)

    def to_json(self) -> dict:
        return {
            "regime": self.regime,
            "root": frac_str(self.root) if self.root is not None else None,
            "agents": [
                {
                    "e_reservation": frac_str(a.e_reservation),
                    "e_satiation": frac_str(a.e_satiation),
                    "income": frac_str(a.income),
                }
                for a in self.agents
            ],
        }


@dataclass(frozen=True)
class Equilibrium:
    prices: PriceVector
    allocation: Allocation
    schedule: IncomeSchedule
    hypothesis_class: str

    def to_json(self) -> dict:
        return {
            "prices": [frac_str(v) for v in self.prices],
            "allocation": [[frac_str(v) for v in row] for row in self.allocation.rows],
            "incomes": self.schedule.to_json(),
            "hypothesis_class": self.hypothesis_class,
        }


def satiation_value(values, cap) -> Fraction:
    """sup of the utility over the consumption space: cap times the best value."""
    return to_fraction(cap) * max(fracs(values))


def _bundle_candidates(values, cap, prices):
    """Vertices of 2-constraint budget/target programs have at most two
    positive entries; enumerate singletons and pairs."""
    L = len(values)
    singles = [(l,) for l in range(L)]
    pairs = [(l, k) for l in range(L) for k in range(l + 1, L)]
    return singles + pairs


def expenditure(values, cap, target, prices) -> Fraction:
    """Minimum spending reaching utility `target` within the cap.

    Closed form by support enumeration: optimal bundles put mass on at most
    two objects (target tight; mass cap tight if two)."""
    v = fracs(values)
    c = to_fraction(cap)
    p = fracs(prices)
    t = to_fraction(target)
    if t <= 0:
        return ZERO
    if t > satiation_value(v, c):
        raise UnreachableUtilityError(
            f"target {frac_str(t)} above satiation {frac_str(satiation_value(v, c))}"
        )
    best: Fraction | None = None
    for l in range(len(v)):
        if v[l] <= 0:
            continue
        amount = t / v[l]
        if amount <= c:
            cost = p[l] * amount
            if best is None or cost < best:
                best = cost
    for l in range(len(v)):
        for k in range(len(v)):
            if v[l] == v[k]:
                continue
            # mass cap tight: a + b = c, v_l a + v_k b = t
            a = (t - v[k] * c) / (v[l] - v[k])
            b = c - a
            if a < 0 or b < 0:
                continue
            cost = p[l] * a + p[k] * b
            if best is None or cost < best:
                best = cost
    assert best is not None  # reachable target always admits a candidate
    return best


def demand(values, cap, prices, income):
    """Utility-maximizing bundle on the budget set, selected deterministically.

    Among maximizers the cheapest bundle is returned (so satiated agents
    spend exactly their satiation expenditure), ties broken by object
    index.  Support enumeration over singletons and pairs is exhaustive for
    the two-constraint linear program.
    """
    v = fracs(values)
    c = to_fraction(cap)
    p = fracs(prices)
    m = to_fraction(income)
    if m < 0:
        raise ValueError("income must be nonnegative")
    L = len(v)
    best = None  # (utility, -cost) maximized lexicographically

    def consider(x):
        nonlocal best
        util = dot(v, x)
        cost = dot(p, x)
        key = (util, -cost)
        if best is None or key > best[0]:
            best = (key, x)

    consider(tuple([ZERO] * L))
    for l in range(L):
        if p[l] > 0:
            amount = min(m / p[l], c)
        else:
            amount = c
        x = [ZERO] * L
        x[l] = amount
        consider(tuple(x))
    for l in range(L):
        for k in range(L):
            if l == k:
                continue
            # budget and cap both tight: p_l a + p_k b = m, a + b = c
            if p[l] == p[k]:
                continue
            a = (m - p[k] * c) / (p[l] - p[k])
            b = c - a
            if a < 0 or b < 0:
                continue
            x = [ZERO] * L
            x[l] = a
            x[k] = b
            consider(tuple(x))
    return best[1]


def income_schedule(prices, problem: AllocationProblem) -> IncomeSchedule:
    """Exact income functions at a price vector.

    Surplus regime (total satiation expenditure below the value of supply):
    everyone gets her satiation expenditure plus an equal share of the
    surplus.  Otherwise the common level is the exact root of the
    piecewise-linear aggregate-income identity, found by walking its
    breakpoints.
    """
    p = fracs(prices)
    value_q = dot(p, problem.capacities)
    per_agent = []
    for agent in problem.agents:
        v_sat = satiation_value(agent.utility.values, agent.cap)
        e_sat = expenditure(agent.utility.values, agent.cap, v_sat, p)
        target = agent.reservation
        if target > v_sat:
            raise UnreachableUtilityError(
                f"reservation of {agent.name} above satiation"
            )
        e_res = expenditure(agent.utility.values, agent.cap, target, p)
        per_agent.append((e_res, e_sat))

    total_sat = sum((e for _, e in per_agent), ZERO)
    if total_sat < value_q:
        surplus_share = (value_q - total_sat) / problem.num_agents
        agents = tuple(
            AgentIncome(e_res, e_sat, e_sat + surplus_share)
            for e_res, e_sat in per_agent
        )
        return IncomeSchedule(agents, "surplus", None)

    def phi(m: Fraction) -> Fraction:
        total = sum(
            (min(max(m, e_res), e_sat) for e_res, e_sat in per_agent), ZERO
        )
        return total - value_q

    breakpoints = sorted({b for pair in per_agent for b in pair} | {ZERO})
    root = None
    prev = breakpoints[0]
    prev_val = phi(prev)
    if prev_val > 0:
        # phi(0) <= 0 is guaranteed when an IR allocation exists
        raise ValueError(
            "aggregate reservation expenditure exceeds supply value "
            "(no IR allocation at these prices)"
        )
    if prev_val == 0:
        root = prev
    else:
        for b in breakpoints[1:]:
            val = phi(b)
            if val >= 0:
                if val == 0:
                    root = b
                else:
                    slope = sum(
                        1 for e_res, e_sat in per_agent if e_res <= prev and b <= e_sat
                    )
                    assert slope > 0, "flat segment cannot cross zero"
                    root = prev + (-prev_val) / slope
                break
            prev, prev_val = b, val
    assert root is not None, "aggregate income identity has no root"
    agents = tuple(
        AgentIncome(e_res, e_sat, min(max(root, e_res), e_sat))
        for e_res, e_sat in per_agent
    )
    return IncomeSchedule(agents, "root", root)


def excess_demand(prices, problem: AllocationProblem):
    """z = sum of selected demands minus supply, exact."""
    p = fracs(prices)
    schedule = income_schedule(p, problem)
    totals = [ZERO] * problem.num_objects
    for agent, inc in zip(problem.agents, schedule.agents):
        x = demand(agent.utility.values, agent.cap, p, inc.income)
        for l, v in enumerate(x):
            totals[l] += v
    return tuple(t - q for t, q in zip(totals, problem.capacities))


def detect_hypothesis_class(problem: AllocationProblem) -> str:
    """Which branch of the equilibrium existence hypotheses the instance
    satisfies, if any."""
    if sum(problem.capacities) < min(problem.caps):
        return "large-caps"
    favorites = []
    for agent in problem.agents:
        vals = agent.utility.values
        top = max(vals)
        arg = [l for l, v in enumerate(vals) if v == top]
        if len(arg) != 1:
            favorites.append(None)
        else:
            favorites.append(arg[0])
    if None not in favorites and len(set(favorites)) == 1:
        if _has_strictly_positive_ir(problem):
            return "common-favorite"
    return "none"


def _has_strictly_positive_ir(problem: AllocationProblem) -> bool:
    # maximize the minimum entry s subject to IR and x being an allocation
    from .model import allocation_lp_rows

    n, L = problem.num_agents, problem.num_objects
    nvars = n * L
    a_ub, b_ub, a_eq, b_eq = allocation_lp_rows(problem)
    width = nvars + 1
    a_ub = [list(r) + [ZERO] for r in a_ub]
    a_eq = [list(r) + [ZERO] for r in a_eq]
    for i, agent in enumerate(problem.agents):
        row = [ZERO] * width
        for l in range(L):
            row[i * L + l] = -agent.utility.values[l]
        a_ub.append(row)
        b_ub.append(-agent.reservation)
    for idx in range(nvars):
        row = [ZERO] * width
        row[idx] = Fraction(-1)
        row[nvars] = Fraction(1)
        a_ub.append(row)
        b_ub.append(ZERO)
    objective = [ZERO] * nvars + [ONE]
    res = solve_lp(objective, a_ub, b_ub, a_eq, b_eq)
    return res.optimal and res.value > 0


@dataclass(frozen=True)
class MarketConfig:
    starts: int = 8
    iterations: int = 400
    gamma0: float = 0.5
    tau: float = 40.0
    seed: int = 0
    snap_denominators: tuple[int, ...] = (
        1, 2, 3, 4, 5, 6, 8, 9, 10, 12, 15, 16, 18, 20, 24, 30, 36, 40, 48, 60,
        72, 90, 120, 180, 240, 360, 720, 2520, 10**4, 10**6,
    )
    sweep_max_denominator: int = 10
    tol_search: float = 1e-7
    ray_attempts: int = 400


def _project_simplex(p):
    """Euclidean projection onto the probability simplex."""
    n = len(p)
    u = sorted(p, reverse=True)
    css = 0.0
    rho, lam = 0, 0.0
    for k in range(n):
        css += u[k]
        t = (css - 1.0) / (k + 1)
        if u[k] - t > 0:
            rho, lam = k, t
    return [max(v - lam, 0.0) for v in p]


def _rationalize(pf, denominator: int) -> PriceVector | None:
    units = [round(v * denominator) for v in pf]
    total = sum(units)
    if total <= 0:
        return None
    # normalize by adjusting the largest coordinate
    drift = denominator - total
    largest = max(range(len(units)), key=lambda l: units[l])
    units[largest] += drift
    if units[largest] < 0:
        return None
    return PriceVector(tuple(Fraction(u, denominator) for u in units))


def _clearing_allocation(
    prices: PriceVector, problem: AllocationProblem, schedule: IncomeSchedule
) -> Allocation | None:
    """Exact LP: an allocation with every row inside its agent's demand set.

    Demand-set membership for linear utilities is linear: within budget and
    cap, achieving the (precomputed) maximal affordable utility.
    """
    from .model import allocation_lp_rows

    n, L = problem.num_agents, problem.num_objects
    nvars = n * L
    a_ub, b_ub, a_eq, b_eq = allocation_lp_rows(problem)
    p = tuple(prices)
    for i, (agent, inc) in enumerate(zip(problem.agents, schedule.agents)):
        x_star = demand(agent.utility.values, agent.cap, p, inc.income)
        u_star = dot(agent.utility.values, x_star)
        row = [ZERO] * nvars
        for l in range(L):
            row[i * L + l] = p[l]
        a_ub.append(row)
        b_ub.append(inc.income)
        row = [ZERO] * nvars
        for l in range(L):
            row[i * L + l] = -agent.utility.values[l]
        a_ub.append(row)
        b_ub.append(-u_star)
    res = solve_lp([ZERO] * nvars, a_ub, b_ub, a_eq, b_eq)
    if not res.optimal:
        return None
    rows = tuple(tuple(res.x[i * L + l] for l in range(L)) for i in range(n))
    return Allocation(rows)


def _float_clearing_feasible(prices, problem: AllocationProblem,
                             schedule: IncomeSchedule, tol: float = 1e-7):
    """Cheap float screen for the exact clearing LP.

    Checks (with scipy) whether some allocation inside the agents' demand
    sets clears the market; only candidates passing this screen are worth
    the exact rational feasibility solve.
    """
    from scipy.optimize import linprog

    n, L = problem.num_agents, problem.num_objects
    p = [float(v) for v in prices]
    a_ub, b_ub = [], []
    for i, (agent, inc) in enumerate(zip(problem.agents, schedule.agents)):
        x_star = demand(agent.utility.values, agent.cap, tuple(prices), inc.income)
        u_star = float(dot(agent.utility.values, x_star))
        row = [0.0] * (n * L)
        for l in range(L):
            row[i * L + l] = 1.0
        a_ub.append(row)
        b_ub.append(float(agent.cap))
        row = [0.0] * (n * L)
        for l in range(L):
            row[i * L + l] = p[l]
        a_ub.append(row)
        b_ub.append(float(inc.income) + tol)
        row = [0.0] * (n * L)
        for l in range(L):
            row[i * L + l] = -float(agent.utility.values[l])
        a_ub.append(row)
        b_ub.append(-u_star + tol)
    a_eq, b_eq = [], []
    for l in range(L):
        row = [0.0] * (n * L)
        for i in range(n):
            row[i * L + l] = 1.0
        a_eq.append(row)
        b_eq.append(float(problem.capacities[l]))
    res = linprog(
        [0.0] * (n * L), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=[(0, None)] * (n * L), method="highs",
    )
    return res.status == 0


def _try_price(prices: PriceVector, problem: AllocationProblem, hypothesis: str):
    try:
        schedule = income_schedule(tuple(prices), problem)
    except UnreachableUtilityError:
        return None
    x = _clearing_allocation(prices, problem, schedule)
    if x is None:
        return None
    return Equilibrium(prices, x, schedule, hypothesis)


def _float_excess(pf, problem: AllocationProblem, denominator: int = 10**9):
    pr = _rationalize(pf, denominator)
    if pr is None:
        return None
    try:
        z = excess_demand(tuple(pr), problem)
    except UnreachableUtilityError:
        return None
    return [float(v) for v in z]


def solve_equilibrium(
    problem: AllocationProblem, cfg: MarketConfig = MarketConfig()
) -> Equilibrium:
    """Multi-start damped tatonnement with exact certification.

    Every returned equilibrium has been re-established exactly: rational
    prices, rational incomes, and an exact clearing allocation drawn from
    the demand sets.  Failure to find one raises, with the best residual
    seen; it is never reported as success.
    """
    feasible, _ = ir_feasible(problem)
    if not feasible:
        raise EquilibriumSearchError("no IR allocation exists")
    hypothesis = detect_hypothesis_class(problem)
    L = problem.num_objects
    best_residual: float | None = None
    best_pf: list[float] | None = None
    tried: set = set()

    def attempt(prices: PriceVector):
        if prices.p in tried:
            return None
        tried.add(prices.p)
        try:
            schedule = income_schedule(prices.p, problem)
        except UnreachableUtilityError:
            return None
        if not _float_clearing_feasible(prices.p, problem, schedule):
            return None
        return _try_price(prices, problem, hypothesis)

    rng = random.Random(cfg.seed)
    for start in range(cfg.starts):
        if start == 0:
            pf = [1.0 / L] * L
        else:
            raw = [rng.random() + 1e-3 for _ in range(L)]
            s = sum(raw)
            pf = [v / s for v in raw]
        for t in range(cfg.iterations):
            z = _float_excess(pf, problem)
            if z is None:
                break
            residual = max(abs(v) for v in z)
            if best_residual is None or residual < best_residual:
                best_residual = residual
                best_pf = list(pf)
            checkpoint = (
                residual < cfg.tol_search or t % 40 == 0 or t == cfg.iterations - 1
            )
            if checkpoint and residual < 1e-2:
                # cheap small denominators first; the expensive fine grids
                # only once the float iterate is essentially converged
                denominators = [
                    d
                    for d in cfg.snap_denominators
                    if d <= 720 or residual < 1e-5
                ]
                for d in denominators:
                    pr = _rationalize(pf, d)
                    if pr is None:
                        continue
                    eq = attempt(pr)
                    if eq is not None:
                        return eq
                if residual < cfg.tol_search:
                    break
            gamma = cfg.gamma0 / (1.0 + t / cfg.tau)
            pf = _project_simplex([p + gamma * v for p, v in zip(pf, z)])

    # exact indifference-tree candidates, nearest to the float iterate first
    candidates = _tie_tree_candidates(problem)
    anchor = best_pf or [1.0 / L] * L

    def dist(price):
        return sum((float(v) - a) ** 2 for v, a in zip(price, anchor))

    for price in sorted(candidates, key=dist):
        eq = attempt(PriceVector(price))
        if eq is not None:
            return eq

    # mixed indifference-hyperplane rays: an equilibrium pinned by L-1
    # independent ties (bang-per-buck ties of budget-bound agents and/or
    # equal-gain ties of cap-bound agents topping up with a cheap object)
    # lies on the ray those hyperplanes cut out.  Enumerate (L-1)-subsets,
    # float-screen for a strictly positive ray, then certify the nearest
    # candidates to the float iterate exactly.
    if 2 <= L <= 4:
        import numpy as _np

        rows = _tie_hyperplane_rows(problem)
        rows_f = _np.array([[float(c) for c in r] for r in rows])
        ones = _np.ones(L)
        ray_leads: list[tuple[float, tuple[int, ...]]] = []
        seen_rays: set = set()
        for combo in itertools.combinations(range(len(rows)), L - 1):
            a = _np.vstack([rows_f[list(combo)], ones])
            b = _np.zeros(L)
            b[L - 1] = 1.0
            try:
                pf_ = _np.linalg.solve(a, b)
            except _np.linalg.LinAlgError:
                continue
            if not (pf_ > 1e-12).all():
                continue
            key = tuple(round(v, 9) for v in pf_)
            if key in seen_rays:
                continue
            seen_rays.add(key)
            d = sum((v - a0) ** 2 for v, a0 in zip(pf_, anchor))
            ray_leads.append((d, combo))
        ray_leads.sort()
        for _, combo in ray_leads[: cfg.ray_attempts]:
            price = _solve_square_exact(
                [rows[i] for i in combo] + [(ONE,) * L],
                [ZERO] * (L - 1) + [ONE],
            )
            if price is None or any(v <= 0 for v in price):
                continue
            eq = attempt(PriceVector(price))
            if eq is not None:
                return eq

    # float refinement: minimize the clearing-gap LP value over the simplex
    # (zero exactly at equilibrium), then resolve the regime at each
    # minimizer with tolerance so the exact kink system can be solved
    seen_structures: set = set()
    seen_prices: set = set()

    def recover(sample, tie_rows, rel_tol):
        price = _structure_system_price(
            problem, sample, tie_rows, rel_tol, seen_structures
        )
        if price is None or price in seen_prices:
            return None
        seen_prices.add(price)
        return attempt(PriceVector(price))

    # line search of the clearing gap along each one-parameter tie family.
    # On the full simplex the gap is discontinuous (it dips to zero only on
    # tie manifolds), so grid scans and descent methods miss equilibria;
    # restricted to a family the gap is continuous near an equilibrium on
    # it.  The refined parameter is rationalized by continued fractions and
    # the resulting exact price certified like any other candidate.
    if L >= 2:
        from scipy.optimize import minimize_scalar

        def family_gap(comps, t):
            if not 0.0 < t < 1.0:
                return 1e9
            pf_ = [float(v) for v in _family_price(comps, t, L)]
            val = _clearing_gap_float(pf_, problem)
            return 1e9 if val is None else val

        # coarse scan of every family, then refine the most promising
        # local minima across all families first
        leads = []
        coarse = 16
        for tie_rows, comps in _tie_families(problem):
            vals = [family_gap(comps, (i + 0.5) / coarse) for i in range(coarse)]
            for i in range(coarse):
                v = vals[i]
                if v >= 1e9:
                    continue
                left = vals[i - 1] if i > 0 else float("inf")
                right = vals[i + 1] if i < coarse - 1 else float("inf")
                if v <= left and v <= right:
                    leads.append((v, (i + 0.5) / coarse, tie_rows, comps))
        leads.sort(key=lambda lead: lead[0])
        for v0, t0, tie_rows, comps in leads:
            res = minimize_scalar(
                lambda t: family_gap(comps, t),
                bounds=(max(t0 - 1.5 / coarse, 1e-9),
                        min(t0 + 1.5 / coarse, 1 - 1e-9)),
                method="bounded",
                options={"xatol": 1e-13},
            )
            if res.fun > 1e-5:
                continue
            found = None
            for den in (10**3, 10**4, 10**6, 10**9):
                t_r = Fraction(res.x).limit_denominator(den)
                if not 0 < t_r < 1:
                    continue
                eq = attempt(PriceVector(_family_price(comps, t_r, L)))
                if eq is not None:
                    found = eq
                    break
            if found is not None:
                return found
            # income-kink pinning: resolve the regime at the minimizer
            pf_ = [float(v) for v in _family_price(comps, res.x, L)]
            pr = _rationalize(pf_, 10**9)
            if pr is not None:
                for rel_tol in (1e-9, 1e-6, 1e-4):
                    eq = recover(pr.p, tie_rows, rel_tol)
                    if eq is not None:
                        return eq

    # regime resolution: read the median-branch / support / tie structure
    # at sample prices and solve the induced exact linear system
    if L <= 4:
        for sample, tie_rows in _kink_sample_points(problem):
            eq = recover(sample, tie_rows, 0.0)
            if eq is not None:
                return eq

    # deterministic simplicial sweep fallback for small L
    if L <= 4:
        for d in range(1, cfg.sweep_max_denominator + 1):
            for units in _compositions(d, L):
                pr = PriceVector(tuple(Fraction(u, d) for u in units))
                eq = attempt(pr)
                if eq is not None:
                    return eq
    raise EquilibriumSearchError(
        f"no verified equilibrium found (hypothesis class: {hypothesis}, "
        f"best clearing residual {best_residual})",
        best_residual,
    )


def _tie_tree_candidates(problem: AllocationProblem, max_candidates: int = 5000):
    """Exact candidate prices from indifference structures.

    An isolated equilibrium of a linear-utility market sits where enough
    agents are indifferent between goods: p_l / p_k = v^i_l / v^i_k along
    a spanning tree of the goods (some goods possibly priced at zero).
    Enumerating these trees yields exact rational candidates that no
    fixed-denominator snap can hit.
    """
    L = problem.num_objects
    ratios: dict[tuple[int, int], set] = {}
    for agent in problem.agents:
        v = agent.utility.values
        for l in range(L):
            for k in range(l + 1, L):
                if v[l] > 0 and v[k] > 0:
                    ratios.setdefault((l, k), set()).add((v[l], v[k]))
    edges = [(l, k, a, b) for (l, k), rs in sorted(ratios.items())
             for (a, b) in sorted(rs)]
    zero_sets = [frozenset()]
    if L > 1:
        for size in range(1, L):
            zero_sets.extend(
                frozenset(z) for z in itertools.combinations(range(L), size)
            )
    out = set()
    for zero in zero_sets:
        live = [l for l in range(L) if l not in zero]
        live_edges = [e for e in edges if e[0] in live and e[1] in live]
        m = len(live)
        if m == 1:
            price = [ZERO] * L
            price[live[0]] = ONE
            out.add(tuple(price))
            continue
        for combo in itertools.combinations(live_edges, m - 1):
            price = {live[0]: ONE}
            remaining = list(combo)
            progress = True
            while remaining and progress:
                progress = False
                for e in list(remaining):
                    l, k, a, b = e
                    if l in price and k not in price:
                        price[k] = price[l] * b / a
                        remaining.remove(e)
                        progress = True
                    elif k in price and l not in price:
                        price[l] = price[k] * a / b
                        remaining.remove(e)
                        progress = True
            if remaining or len(price) != m:
                continue
            total = sum(price.values())
            full = [ZERO] * L
            for l, v in price.items():
                full[l] = v / total
            out.add(tuple(full))
            if len(out) >= max_candidates:
                return out
    return out


def _expenditure_bundle(values, cap, target, prices):
    """Argmin bundle of the expenditure program (same enumeration as
    `expenditure`)."""
    v = fracs(values)
    c = to_fraction(cap)
    p = fracs(prices)
    t = to_fraction(target)
    L = len(v)
    if t <= 0:
        return tuple([ZERO] * L)
    best = None
    for l in range(L):
        if v[l] <= 0:
            continue
        amount = t / v[l]
        if amount <= c:
            cost = p[l] * amount
            x = [ZERO] * L
            x[l] = amount
            if best is None or cost < best[0]:
                best = (cost, tuple(x))
    for l in range(L):
        for k in range(L):
            if v[l] == v[k]:
                continue
            a = (t - v[k] * c) / (v[l] - v[k])
            b = c - a
            if a < 0 or b < 0:
                continue
            cost = p[l] * a + p[k] * b
            x = [ZERO] * L
            x[l] = a
            x[k] = b
            if best is None or cost < best[0]:
                best = (cost, tuple(x))
    if best is None:
        raise UnreachableUtilityError("target out of reach")
    return best[1]


def _clearing_gap_float(pf, problem: AllocationProblem, tol: float = 1e-9):
    """Minimal total clearing slack inside the demand sets, in floats.

    The objective of the refinement phase: zero exactly at equilibrium
    prices, continuous piecewise linear elsewhere.
    """
    from scipy.optimize import linprog

    pr = _rationalize(pf, 10**9)
    if pr is None:
        return None
    try:
        sched = income_schedule(pr.p, problem)
    except (UnreachableUtilityError, ValueError):
        return None
    n, L = problem.num_agents, problem.num_objects
    nv = n * L + 2 * L
    p = [float(v) for v in pr.p]
    a_ub, b_ub = [], []
    for i, (agent, inc) in enumerate(zip(problem.agents, sched.agents)):
        x_star = demand(agent.utility.values, agent.cap, pr.p, inc.income)
        u_star = float(dot(agent.utility.values, x_star))
        row = [0.0] * nv
        for l in range(L):
            row[i * L + l] = 1.0
        a_ub.append(row)
        b_ub.append(float(agent.cap))
        row = [0.0] * nv
        for l in range(L):
            row[i * L + l] = p[l]
        a_ub.append(row)
        b_ub.append(float(inc.income) + tol)
        row = [0.0] * nv
        for l in range(L):
            row[i * L + l] = -float(agent.utility.values[l])
        a_ub.append(row)
        b_ub.append(-u_star + tol)
    a_eq, b_eq = [], []
    for l in range(L):
        row = [0.0] * nv
        for i in range(n):
            row[i * L + l] = 1.0
        row[n * L + l] = 1.0
        row[n * L + L + l] = -1.0
        a_eq.append(row)
        b_eq.append(float(problem.capacities[l]))
    c = [0.0] * (n * L) + [1.0] * (2 * L)
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=[(0, None)] * nv, method="highs")
    return res.fun if res.status == 0 else None


def _structure_system_price(problem: AllocationProblem, sample,
                            tie_rows=(), rel_tol: float = 0.0,
                            seen_structures: set | None = None):
    """Resolve the combinatorial regime at a sample price into an exact price.

    At an equilibrium the prices satisfy a linear system once the regime is
    fixed: which median branch each income is on, which goods each agent
    buys, and which bang-per-buck ties hold.  The regime is read off at the
    sample point; solving the system recovers equilibrium prices whose
    denominators no snapping grid contains.

    With ``rel_tol`` > 0 the regime is read with relative tolerance, so a
    float iterate near an equilibrium resolves to its exact kink structure.
    ``seen_structures`` (if given) caches regime signatures so identical
    systems are solved once.

    Variables: p (L), the common income level m* (split into +/- parts),
    incomes m_i (n), expenditures e_il (n*L).
    """
    n, L = problem.num_agents, problem.num_objects
    p = fracs(sample)
    if any(v <= 0 for v in p):
        return None
    try:
        sched = income_schedule(p, problem)
    except (UnreachableUtilityError, ValueError):
        return None
    if sched.regime != "root":
        return None

    def near(a, b):
        if rel_tol == 0.0:
            return a == b
        return abs(float(a - b)) <= rel_tol * (1.0 + abs(float(b)))

    # read the regime off the sample point
    all_ties = set()
    for (l, k, a, b) in tie_rows:
        all_ties.add((l, k, a, b))
    branches = []
    for agent, inc in zip(problem.agents, sched.agents):
        v = agent.utility.values
        support = set()
        rates = [(v[l] / p[l], l) for l in range(L)]
        rmax = max(r for r, _ in rates)
        if rmax > 0:
            if rel_tol == 0.0:
                support.update(l for r, l in rates if r == rmax)
            else:
                cut = float(rmax) * (1.0 - rel_tol)
                support.update(l for r, l in rates if float(r) >= cut)
        # among (near-)rate-maximal goods the bang-per-buck ratios tie
        # exactly at the resolved price; bundle goods need not tie
        sup = sorted(l for l in support if v[l] > 0)
        for a_idx in range(len(sup)):
            for b_idx in range(a_idx + 1, len(sup)):
                l, k = sup[a_idx], sup[b_idx]
                all_ties.add((l, k, v[l], v[k]))
        bundle = None
        if near(inc.income, inc.e_reservation):
            branch = "res"
            bundle = _expenditure_bundle(v, agent.cap, agent.reservation, p)
        elif near(inc.income, inc.e_satiation):
            branch = "sat"
            target = satiation_value(v, agent.cap)
            bundle = _expenditure_bundle(v, agent.cap, target, p)
        else:
            branch = "mid"
        if bundle is not None:
            support.update(l for l in range(L) if bundle[l] > 0)
        branches.append((branch, bundle, frozenset(support)))
    ties = tuple(sorted(all_ties))
    if seen_structures is not None:
        sig = (ties, tuple(branches))
        if sig in seen_structures:
            return None
        seen_structures.add(sig)

    nv = L + 2 + n + n * L
    MP, MM = L, L + 1

    def M(i):
        return L + 2 + i

    def E(i, l):
        return L + 2 + n + i * L + l

    a_eq, b_eq = [], []

    def eq(row, rhs):
        a_eq.append(row)
        b_eq.append(rhs)

    row = [ZERO] * nv
    for l in range(L):
        row[l] = ONE
    eq(row, ONE)
    for (l, k, a, b) in ties:
        # p_l / p_k = a / b
        row = [ZERO] * nv
        row[l] = b
        row[k] = -a
        eq(row, ZERO)
    row = [ZERO] * nv
    for i in range(n):
        row[M(i)] = ONE
    for l in range(L):
        row[l] = -problem.capacities[l]
    eq(row, ZERO)
    for i, (branch, bundle, support) in enumerate(branches):
        if branch == "mid":
            row = [ZERO] * nv
            row[M(i)] = ONE
            row[MP] = -ONE
            row[MM] = ONE
            eq(row, ZERO)
        else:
            row = [ZERO] * nv
            row[M(i)] = ONE
            for l in range(L):
                row[l] = -bundle[l]
            eq(row, ZERO)
        for l in range(L):
            if l not in support:
                row = [ZERO] * nv
                row[E(i, l)] = ONE
                eq(row, ZERO)
        row = [ZERO] * nv
        for l in range(L):
            row[E(i, l)] = ONE
        row[M(i)] = -ONE
        eq(row, ZERO)
    for l in range(L):
        row = [ZERO] * nv
        for i in range(n):
            row[E(i, l)] = ONE
        row[l] = -problem.capacities[l]
        eq(row, ZERO)
    res = solve_lp([ZERO] * nv, (), (), a_eq, b_eq)
    if not res.optimal:
        return None
    price = tuple(res.x[l] for l in range(L))
    if any(v < 0 for v in price) or sum(price) != 1:
        return None
    return price


def _tie_hyperplane_rows(problem: AllocationProblem):
    """Homogeneous indifference hyperplanes c . p = 0 from the data.

    Two kinds of indifference can pin equilibrium prices.  A budget-bound
    agent mixing objects l and k has equal bang per buck:
    v_l p_k - v_k p_l = 0.  A cap-bound agent topping up her cap with a
    cheap object j while also buying l and k has equal value gain per unit
    of extra money spent over the top-up good:
    (v_l - v_j)(p_k - p_j) - (v_k - v_j)(p_l - p_j) = 0.
    Both are homogeneous and linear in p.  Returns deduplicated
    coefficient rows (scaled so the first nonzero entry is 1).
    """
    L = problem.num_objects
    seen: set = set()
    rows: list[tuple[Fraction, ...]] = []

    def add(row):
        pivot = next((c for c in row if c != 0), None)
        if pivot is None:
            return
        key = tuple(c / pivot for c in row)
        if key not in seen:
            seen.add(key)
            rows.append(key)

    for agent in problem.agents:
        v = agent.utility.values
        for k in range(L):
            for l in range(k + 1, L):
                if v[l] <= 0 and v[k] <= 0:
                    continue
                row = [ZERO] * L
                row[k] = v[l]
                row[l] = -v[k]
                add(row)
        for j in range(L):
            for k in range(L):
                for l in range(k + 1, L):
                    if j in (k, l):
                        continue
                    row = [ZERO] * L
                    row[k] = v[l] - v[j]
                    row[l] = -(v[k] - v[j])
                    row[j] = v[k] - v[l]
                    add(row)
    return rows


def _solve_square_exact(rows, rhs):
    """Gaussian elimination over Fractions; None if singular."""
    n = len(rows)
    a = [list(r) + [rhs[i]] for i, r in enumerate(rows)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        inv = a[col][col]
        a[col] = [c / inv for c in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [c - f * d for c, d in zip(a[r], a[col])]
    return tuple(a[r][n] for r in range(n))


def _ratio_edges(problem: AllocationProblem):
    """Candidate bang-per-buck tie lines p_l / p_k = a / b from the data."""
    L = problem.num_objects
    ratios: dict[tuple[int, int], set] = {}
    for agent in problem.agents:
        v = agent.utility.values
        for l in range(L):
            for k in range(l + 1, L):
                if v[l] > 0 and v[k] > 0:
                    ratios.setdefault((l, k), set()).add((v[l], v[k]))
    return [(l, k, a, b) for (l, k), rs in sorted(ratios.items())
            for (a, b) in sorted(rs)]


def _tie_families(problem: AllocationProblem):
    """One-parameter price families: L-2 tie edges forming two components.

    Yields (tie_rows, comps) where comps = (u, w) map objects to exact
    relative scales; the family is p(t) = ((1-t)·u/Σu, t·w/Σw).
    """
    L = problem.num_objects
    if L < 2:
        return
    edges = _ratio_edges(problem)
    for combo in itertools.combinations(edges, L - 2):
        comps = []
        remaining = list(combo)
        pending = set(range(L))
        while pending:
            root = min(pending)
            comp = {root: ONE}
            progress = True
            while progress:
                progress = False
                for e in list(remaining):
                    l, k, a, b = e
                    if l in comp and k not in comp:
                        comp[k] = comp[l] * b / a
                        remaining.remove(e)
                        progress = True
                    elif k in comp and l not in comp:
                        comp[l] = comp[k] * a / b
                        remaining.remove(e)
                        progress = True
            comps.append(comp)
            pending -= set(comp)
        if remaining or len(comps) != 2:
            continue
        yield tuple(combo), tuple(comps)


def _family_price(comps, t, L):
    """Exact (or float) price on the family at parameter t in (0, 1)."""
    u, w = comps
    su, sw = sum(u.values()), sum(w.values())
    price = [ZERO] * L
    for l, v in u.items():
        price[l] = (1 - t) * v / su
    for l, v in w.items():
        price[l] = t * v / sw
    return tuple(price)


def _kink_sample_points(problem: AllocationProblem, grid: int = 8,
                        family_samples: int = 12):
    """Sample prices with attached tie structures for regime resolution.

    Yields (price, tie_rows): coarse simplex-grid points with no ties, and
    one-parameter families where a spanning forest of bang-per-buck ties
    fixes all but one relative price scale.
    """
    L = problem.num_objects
    for units in _compositions(grid, L):
        if all(u > 0 for u in units):
            yield tuple(Fraction(u, grid) for u in units), ()
    for combo, comps in _tie_families(problem):
        for tt in range(1, family_samples):
            t = Fraction(tt, family_samples)
            yield _family_price(comps, t, L), combo


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class VerificationReport:
    clearing_residual: Fraction
    budget_ok: bool
    demand_optimal: bool
    fairness: FairnessReport
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "clearing_residual": frac_str(self.clearing_residual),
            "budget_ok": self.budget_ok,
            "demand_optimal": self.demand_optimal,
            "fairness": self.fairness.to_json(),
            "failures": list(self.failures),
            "ok": self.ok,
        }


def verify_equilibrium(
    eq: Equilibrium,
    problem: AllocationProblem,
    tol_clear: Fraction = ZERO,
    tol_budget: Fraction = ZERO,
    tol_opt: Fraction = ZERO,
) -> VerificationReport:
    """Full verification: market clearing, budgets, demand optimality, and
    the exact IR / no-justified-envy / Pareto audits."""
    failures = []
    p = tuple(eq.prices)
    x = eq.allocation
    col = x.column_sums()
    clearing = max(abs(c - q) for c, q in zip(col, problem.capacities))
    if clearing > to_fraction(tol_clear):
        failures.append(f"market clearing residual {frac_str(clearing)}")
    budget_ok = True
    for agent, row, inc in zip(problem.agents, x.rows, eq.schedule.agents):
        spend = dot(p, row)
        if spend > inc.income + to_fraction(tol_budget):
            budget_ok = False
            failures.append(f"budget violated for {agent.name}")
    demand_ok = True
    for agent, row, inc in zip(problem.agents, x.rows, eq.schedule.agents):
        x_star = demand(agent.utility.values, agent.cap, p, inc.income)
        if agent.utility(row) < dot(agent.utility.values, x_star) - to_fraction(tol_opt):
            demand_ok = False
            failures.append(f"demand suboptimal for {agent.name}")
    report = audit(x, problem)
    if not report.ir_ok:
        failures.append("IR audit failed")
    if not report.nje:
        failures.append("justified envy present")
    if not report.pareto.holds:
        failures.append("not Pareto optimal")
    return VerificationReport(clearing, budget_ok, demand_ok, report, tuple(failures))
