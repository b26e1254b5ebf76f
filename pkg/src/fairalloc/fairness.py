"""Audits: individual rationality, Pareto optimality, and envy.

Every verdict here is computed in exact rational arithmetic.  The Pareto
checks run the exact simplex, so "optimum equals zero" is a literal
statement, not a tolerance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .constraints import ConstraintStructure, is_equal_type
from .model import Allocation, AllocationProblem, allocation_lp_rows
from .rationals import frac_str, to_fraction
from .simplexlp import LPError, solve_lp

ZERO = Fraction(0)

JUSTIFIED = "justified"
STRONGLY_JUSTIFIED = "strongly-justified"
UNJUSTIFIED = "unjustified"
EPS_JUSTIFIED = "epsilon-justified"
BLOCKED_BY_TYPE = "blocked-by-type"
BLOCKED_BY_FEASIBILITY = "blocked-by-feasibility"


@dataclass(frozen=True)
class EnvyFact:
    envier: int
    envied: int
    gap: Fraction  # u^i(x^j) - u^i(x^i) > 0
    justification: str
    # reservation comparison: what the envied agent would get from the
    # envier's bundle, against her reservation utility
    envied_value_of_enviers_bundle: Fraction
    envied_reservation: Fraction
    chain: tuple[int, ...] | None = None
    boundary_case: bool = False  # u^j(x^i) == reservation - epsilon exactly

    @property
    def is_justified(self) -> bool:
        return self.justification in (JUSTIFIED, STRONGLY_JUSTIFIED)

    @property
    def is_eps_justified(self) -> bool:
        # epsilon-justified envy subsumes the exact notion: the acceptance
        # threshold drops from the reservation to reservation - epsilon
        return self.justification in (JUSTIFIED, STRONGLY_JUSTIFIED, EPS_JUSTIFIED)

    def to_json(self) -> dict:
        d = {
            "envier": self.envier,
            "envied": self.envied,
            "gap": frac_str(self.gap),
            "justification": self.justification,
            "witness": {
                "envied_value_of_enviers_bundle": frac_str(
                    self.envied_value_of_enviers_bundle
                ),
                "envied_reservation": frac_str(self.envied_reservation),
            },
        }
        if self.chain is not None:
            d["chain"] = list(self.chain)
        if self.boundary_case:
            d["boundary_case"] = True
        return d


@dataclass(frozen=True)
class ParetoCertificate:
    mode: str  # "PO" | "wPO" | "ePO"
    epsilon: Fraction
    holds: bool
    improvement: Fraction  # LP optimum: aggregate gain (PO) or uniform gain t
    witness: Allocation | None

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "epsilon": frac_str(self.epsilon),
            "holds": self.holds,
            "improvement": frac_str(self.improvement),
            "witness": [
                [frac_str(v) for v in row] for row in self.witness.rows
            ]
            if self.witness is not None
            else None,
        }


@dataclass(frozen=True)
class FairnessReport:
    ir_slacks: tuple[Fraction, ...]
    ir_ok: bool
    envy_facts: tuple[EnvyFact, ...]
    exchange_facts: tuple[EnvyFact, ...]
    pareto: ParetoCertificate
    equal_treatment_violations: tuple[str, ...]
    epsilon: Fraction

    @property
    def nje(self) -> bool:
        return not any(f.is_justified for f in self.envy_facts)

    @property
    def nsje(self) -> bool:
        return not any(
            f.justification == STRONGLY_JUSTIFIED for f in self.envy_facts
        )

    @property
    def nje_by_exchange(self) -> bool:
        return not any(f.is_justified for f in self.exchange_facts)

    @property
    def eps_nje(self) -> bool:
        """No epsilon-justified envy (stronger than NJE)."""
        return not any(f.is_eps_justified for f in self.envy_facts)

    @property
    def passes(self) -> bool:
        return self.ir_ok and self.nje and self.pareto.holds

    def to_json(self) -> dict:
        return {
            "epsilon": frac_str(self.epsilon),
            "ir": {
                "slacks": [frac_str(s) for s in self.ir_slacks],
                "ok": self.ir_ok,
            },
            "envy_facts": [f.to_json() for f in self.envy_facts],
            "exchange_facts": [f.to_json() for f in self.exchange_facts],
            "nje": self.nje,
            "nsje": self.nsje,
            "nje_by_exchange": self.nje_by_exchange,
            "pareto": self.pareto.to_json(),
            "equal_treatment_violations": list(self.equal_treatment_violations),
            "passes": self.passes,
        }


def check_ir(
    x: Allocation, problem: AllocationProblem, epsilon: Fraction = ZERO
) -> tuple[tuple[Fraction, ...], bool]:
    """Per-agent slack u^i(x^i) - reservation and the epsilon-IR verdict."""
    eps = to_fraction(epsilon)
    slacks = tuple(
        a.utility(row) - a.reservation for a, row in zip(problem.agents, x.rows)
    )
    return slacks, all(s >= -eps for s in slacks)


def _utilities_matrix(x: Allocation, problem: AllocationProblem):
    # entry [i][j] = u^i(x^j)
    return [
        [a.utility(row) for row in x.rows] for a in problem.agents
    ]


def _swap_feasible(
    x: Allocation,
    i: int,
    j: int,
    problem: AllocationProblem,
    cs: ConstraintStructure | None,
) -> bool:
    # the swapped bundles must lie in the receivers' consumption spaces
    if sum(x.rows[j]) > problem.agents[i].cap:
        return False
    if sum(x.rows[i]) > problem.agents[j].cap:
        return False
    if cs is None:
        return True
    y = x.swap(i, j)
    for c in cs.constraints:
        s = c.cell_sum(y)
        if s < c.floor or s > c.ceiling:
            return False
    return True


def check_pairwise_envy(
    x: Allocation,
    problem: AllocationProblem,
    epsilon: Fraction = ZERO,
    cs: ConstraintStructure | None = None,
) -> list[EnvyFact]:
    """One EnvyFact per ordered envious pair.

    Envy is justified only when the pairwise swap remedy is available: the
    exchanged bundles must fit the receivers' caps (and, with a constraint
    structure, the swap must stay inside A^C and the pair must be of equal
    type); otherwise the fact is reported as blocked.
    """
    eps = to_fraction(epsilon)
    n = problem.num_agents
    um = _utilities_matrix(x, problem)
    facts: list[EnvyFact] = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gap = um[i][j] - um[i][i]
            if gap <= 0:
                continue
            back = um[j][i]
            res = problem.agents[j].reservation
            boundary = eps > 0 and back == res - eps
            if not _swap_feasible(x, i, j, problem, cs):
                status = BLOCKED_BY_FEASIBILITY
            elif cs is not None and not is_equal_type(i, j, problem, cs):
                status = BLOCKED_BY_TYPE
            elif back > res:
                status = STRONGLY_JUSTIFIED
            elif back == res:
                status = JUSTIFIED
            elif eps > 0 and back > res - eps:
                status = EPS_JUSTIFIED
            else:
                status = UNJUSTIFIED
            facts.append(
                EnvyFact(i, j, gap, status, back, res, boundary_case=boundary)
            )
    return facts


def check_exchange_envy(
    x: Allocation,
    problem: AllocationProblem,
    epsilon: Fraction = ZERO,
) -> list[EnvyFact]:
    """Justified envy by exchange: for each envious pair (i, j), search for
    a chain of distinct agents i, j, ..., k along envy edges whose last
    agent k still accepts i's bundle.

    Any walk from j to an accepting agent shortens to a simple path, so
    breadth-first search over the envy digraph (excluding i) is exact and
    returns a shortest witness chain.  Every hand-off in the chain must fit
    the receiver's cap, or the exchange remedy is infeasible.
    """
    eps = to_fraction(epsilon)
    n = problem.num_agents
    um = _utilities_matrix(x, problem)
    totals = [sum(row) for row in x.rows]
    caps = [a.cap for a in problem.agents]
    envies = [
        [um[i][j] > um[i][i] for j in range(n)] for i in range(n)
    ]

    def accepts(k: int, i: int) -> bool:
        if totals[i] > caps[k]:
            return False
        res = problem.agents[k].reservation
        back = um[k][i]
        if eps > 0:
            return back > res - eps
        return back >= res

    facts: list[EnvyFact] = []
    for i in range(n):
        for j in range(n):
            if i == j or not envies[i][j]:
                continue
            gap = um[i][j] - um[i][i]
            res = problem.agents[j].reservation
            if totals[j] > caps[i]:
                # i cannot hold j's bundle, so no exchange remedies this envy
                facts.append(
                    EnvyFact(i, j, gap, BLOCKED_BY_FEASIBILITY, um[j][i], res)
                )
                continue
            # BFS from j over cap-feasible envy edges, never revisiting i
            parent: dict[int, int | None] = {j: None}
            queue = deque([j])
            terminal = None
            if accepts(j, i):
                terminal = j
            while queue and terminal is None:
                k = queue.popleft()
                for nxt in range(n):
                    if (
                        nxt == i
                        or nxt in parent
                        or not envies[k][nxt]
                        or totals[nxt] > caps[k]
                    ):
                        continue
                    parent[nxt] = k
                    if accepts(nxt, i):
                        terminal = nxt
                        break
                    queue.append(nxt)
            if terminal is None:
                facts.append(
                    EnvyFact(i, j, gap, UNJUSTIFIED, um[j][i], res)
                )
                continue
            chain = [terminal]
            while parent[chain[-1]] is not None:
                chain.append(parent[chain[-1]])
            chain.append(i)
            chain.reverse()
            last = chain[-1]
            back_last = um[last][i]
            res_last = problem.agents[last].reservation
            if back_last > res_last:
                status = STRONGLY_JUSTIFIED
            elif back_last >= res_last:
                status = JUSTIFIED
            else:  # accepted only through the epsilon relaxation
                status = EPS_JUSTIFIED
            facts.append(
                EnvyFact(i, j, gap, status, back_last, res_last, chain=tuple(chain))
            )
    return facts


def check_pareto(
    x: Allocation,
    problem: AllocationProblem,
    cs: ConstraintStructure | None = None,
    mode: str = "PO",
    epsilon: Fraction = ZERO,
) -> ParetoCertificate:
    """Pareto audits by exact LP over A^C.

    PO:   max sum_i u^i(y^i) - u^i(x^i)  s.t. u^i(y^i) >= u^i(x^i); PO iff 0.
    wPO / ePO:  max t  s.t. u^i(y^i) >= u^i(x^i) + t; wPO iff t* <= 0,
    epsilon-PO iff t* <= epsilon.
    """
    eps = to_fraction(epsilon)
    n, L = problem.num_agents, problem.num_objects
    nvars = n * L
    a_ub, b_ub, a_eq, b_eq = allocation_lp_rows(problem, cs)
    base = [problem.agents[i].utility(x.rows[i]) for i in range(n)]

    if mode == "PO":
        objective = [ZERO] * nvars
        for i in range(n):
            for l in range(L):
                objective[i * L + l] = problem.agents[i].utility.values[l]
        for i in range(n):
            row = [ZERO] * nvars
            for l in range(L):
                row[i * L + l] = -problem.agents[i].utility.values[l]
            a_ub.append(row)
            b_ub.append(-base[i])
        res = solve_lp(objective, a_ub, b_ub, a_eq, b_eq)
        if not res.optimal:
            raise LPError(f"Pareto LP failed: {res.status}")
        improvement = res.value - sum(base, ZERO)
        holds = improvement == 0
        witness = None
        if not holds:
            rows = tuple(
                tuple(res.x[i * L + l] for l in range(L)) for i in range(n)
            )
            witness = Allocation(rows)
        return ParetoCertificate("PO", eps, holds, improvement, witness)

    if mode not in ("wPO", "ePO"):
        raise ValueError(f"unknown Pareto mode {mode!r}")

    # variables: y (nvars), then t = t_pos - t_neg
    width = nvars + 2
    objective = [ZERO] * nvars + [Fraction(1), Fraction(-1)]
    a_ub2 = [list(r) + [ZERO, ZERO] for r in a_ub]
    a_eq2 = [list(r) + [ZERO, ZERO] for r in a_eq]
    for i in range(n):
        row = [ZERO] * width
        for l in range(L):
            row[i * L + l] = -problem.agents[i].utility.values[l]
        row[nvars] = Fraction(1)
        row[nvars + 1] = Fraction(-1)
        a_ub2.append(row)
        b_ub.append(-base[i])
    res = solve_lp(objective, a_ub2, b_ub, a_eq2, b_eq)
    if not res.optimal:
        raise LPError(f"Pareto LP failed: {res.status}")
    t_star = res.value
    threshold = eps if mode == "ePO" else ZERO
    holds = t_star <= threshold
    witness = None
    if not holds:
        rows = tuple(
            tuple(res.x[i * L + l] for l in range(L)) for i in range(n)
        )
        witness = Allocation(rows)
    return ParetoCertificate(mode, eps, holds, t_star, witness)


def equal_treatment_audit(
    x: Allocation, problem: AllocationProblem
) -> tuple[str, ...]:
    """Consistency check: among agents with identical utility vectors, a
    weakly higher reservation must come with weakly higher achieved utility."""
    violations = []
    n = problem.num_agents
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ai, aj = problem.agents[i], problem.agents[j]
            if ai.utility.values != aj.utility.values:
                continue
            if ai.reservation >= aj.reservation:
                ui = ai.utility(x.rows[i])
                uj = aj.utility(x.rows[j])
                if ui < uj:
                    violations.append(
                        f"{ai.name} (reservation {frac_str(ai.reservation)}) gets "
                        f"{frac_str(ui)} < {frac_str(uj)} of clone {aj.name}"
                    )
    return tuple(violations)


def audit(
    x: Allocation,
    problem: AllocationProblem,
    epsilon: Fraction = ZERO,
    cs: ConstraintStructure | None = None,
    pareto_mode: str = "PO",
) -> FairnessReport:
    """Full fairness report: IR, envy (pairwise and by exchange), Pareto,
    and equal treatment, all in rational mode."""
    eps = to_fraction(epsilon)
    slacks, ir_ok = check_ir(x, problem, eps)
    facts = check_pairwise_envy(x, problem, eps, cs)
    exchange = check_exchange_envy(x, problem, eps)
    pareto = check_pareto(x, problem, cs, pareto_mode, eps)
    et = equal_treatment_audit(x, problem)
    return FairnessReport(slacks, ir_ok, tuple(facts), tuple(exchange), pareto, et, eps)
