"""Exact linear programming over rationals.

Two-phase tableau simplex with Bland's rule, all arithmetic in
`fractions.Fraction`.  Problem sizes here are tiny (tens of variables), so
exactness matters far more than speed: the Pareto and feasibility audits
must be able to report an optimum of exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

ZERO = Fraction(0)
ONE = Fraction(1)


class LPError(Exception):
    pass


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: tuple[Fraction, ...] | None
    value: Fraction | None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(
    objective: Sequence[Fraction],
    a_ub: Sequence[Sequence[Fraction]] = (),
    b_ub: Sequence[Fraction] = (),
    a_eq: Sequence[Sequence[Fraction]] = (),
    b_eq: Sequence[Fraction] = (),
    maximize: bool = True,
) -> LPResult:
    """Solve max (or min) objective . x  s.t.  a_ub x <= b_ub, a_eq x = b_eq, x >= 0."""
    a_ub, b_ub = a_ub or (), b_ub or ()
    a_eq, b_eq = a_eq or (), b_eq or ()
    n = len(objective)
    obj = [Fraction(c) for c in objective]
    if not maximize:
        obj = [-c for c in obj]

    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    slack_of_row: list[int | None] = []  # index of slack var, None for eq rows
    for a, b in zip(a_ub, b_ub):
        if len(a) != n:
            raise LPError("constraint width mismatch")
        rows.append([Fraction(v) for v in a])
        rhs.append(Fraction(b))
        slack_of_row.append(len(rows) - 1)
    n_ub = len(rows)
    for a, b in zip(a_eq, b_eq):
        if len(a) != n:
            raise LPError("constraint width mismatch")
        rows.append([Fraction(v) for v in a])
        rhs.append(Fraction(b))
        slack_of_row.append(None)

    m = len(rows)
    n_slack = n_ub
    # layout: structural | slack | artificial
    n_art = 0
    art_col: list[int | None] = [None] * m
    for r in range(m):
        negative = rhs[r] < 0
        if negative:
            rows[r] = [-v for v in rows[r]]
            rhs[r] = -rhs[r]
        needs_art = slack_of_row[r] is None or negative
        if needs_art:
            art_col[r] = n + n_slack + n_art
            n_art += 1

    width = n + n_slack + n_art
    tab = [[ZERO] * width for _ in range(m)]
    basis = [0] * m
    for r in range(m):
        for j, v in enumerate(rows[r]):
            tab[r][j] = v
        s = slack_of_row[r]
        if s is not None:
            # if the row was negated to normalize the rhs, the slack flips sign
            tab[r][n + s] = ONE if art_col[r] is None else -ONE
        if art_col[r] is not None:
            tab[r][art_col[r]] = ONE
            basis[r] = art_col[r]
        else:
            basis[r] = n + s  # type: ignore[operator]

    def pivot(r: int, c: int) -> None:
        piv = tab[r][c]
        inv = ONE / piv
        tab[r] = [v * inv for v in tab[r]]
        rhs[r] = rhs[r] * inv
        for rr in range(m):
            if rr == r:
                continue
            f = tab[rr][c]
            if f == 0:
                continue
            row_r = tab[r]
            tab[rr] = [a - f * b for a, b in zip(tab[rr], row_r)]
            rhs[rr] = rhs[rr] - f * rhs[r]
        basis[r] = c

    def run_simplex(cost: list[Fraction], allowed: int) -> Fraction:
        """Maximize cost.x over current tableau using Bland's rule.
        `allowed` limits entering columns to indices < allowed."""
        # reduced costs: z_j - c_j built from scratch each iteration is too
        # slow; maintain the cost row instead.
        cost_row = list(cost) + [ZERO] * (width - len(cost))
        obj_val = ZERO
        for r in range(m):
            f = cost_row[basis[r]]
            if f != 0:
                row_r = tab[r]
                cost_row = [a - f * b for a, b in zip(cost_row, row_r)]
                obj_val -= f * rhs[r]
        # cost_row now holds c_j - z_j (negated reduced costs for max)
        while True:
            enter = -1
            for j in range(allowed):
                if cost_row[j] > 0:
                    enter = j
                    break
            if enter < 0:
                return -obj_val
            leave = -1
            best: Fraction | None = None
            for r in range(m):
                a = tab[r][enter]
                if a > 0:
                    ratio = rhs[r] / a
                    if best is None or ratio < best or (
                        ratio == best and basis[r] < basis[leave]
                    ):
                        best = ratio
                        leave = r
            if leave < 0:
                raise _Unbounded()
            f = cost_row[enter]
            pivot(leave, enter)
            if f != 0:
                row_r = tab[leave]
                cost_row = [a - f * b for a, b in zip(cost_row, row_r)]
                obj_val -= f * rhs[leave]

    class _Unbounded(Exception):
        pass

    if n_art:
        phase1_cost = [ZERO] * (n + n_slack) + [-ONE] * n_art
        try:
            p1 = run_simplex(phase1_cost, width)
        except _Unbounded:  # pragma: no cover - phase 1 is always bounded
            raise LPError("phase 1 unbounded")
        if p1 != 0:
            return LPResult("infeasible", None, None)
        # drive remaining artificials out of the basis
        for r in range(m):
            if basis[r] >= n + n_slack:
                for j in range(n + n_slack):
                    if tab[r][j] != 0:
                        pivot(r, j)
                        break
                # a row with no pivotable column is redundant; leave the
                # artificial basic at zero, it never re-enters (allowed cap)

    try:
        value = run_simplex(obj, n + n_slack)
    except _Unbounded:
        return LPResult("unbounded", None, None)

    x = [ZERO] * n
    for r in range(m):
        if basis[r] < n:
            x[basis[r]] = rhs[r]
    if not maximize:
        value = -value
    return LPResult("optimal", tuple(x), value)
