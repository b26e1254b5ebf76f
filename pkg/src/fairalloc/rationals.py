"""Exact rational helpers: parsing, serialization and grid rounding.

All auditors work over `fractions.Fraction`; solvers hand back floats that
are snapped onto a denominator grid before the exact audits run.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Rational = Fraction


def to_fraction(value) -> Fraction:
    """Parse a rational from JSON-ish input: "2/3", "0.25", int or float.

    Floats go through their decimal repr so 0.1 parses as 1/10, not the
    binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"not a rational: {value!r}")


def frac_str(value: Fraction) -> str:
    """Serialize a Fraction as "p/q" (or "p" for integers)."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def fracs(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(to_fraction(v) for v in values)


def dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    if len(a) != len(b):
        raise ValueError("length mismatch in dot product")
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def snap_matrix_to_grid(
    matrix: Sequence[Sequence[float]],
    column_totals: Sequence[Fraction],
    row_caps: Sequence[Fraction],
    denominator: int,
) -> tuple[tuple[Fraction, ...], ...]:
    """Round a nonnegative float matrix onto the 1/denominator grid so that
    column sums exactly equal `column_totals` and row sums stay within
    `row_caps`.

    Entries are floored to the grid, then each column's deficit is handed
    out in grid units to the rows with the largest dropped remainder that
    still have cap slack.  Requires every q_l * denominator to be integral
    and sum(column_totals) <= sum(row_caps).
    """
    n_rows = len(matrix)
    n_cols = len(column_totals)
    d = denominator
    units = [[0] * n_cols for _ in range(n_rows)]
    remainders = [[0.0] * n_cols for _ in range(n_rows)]
    for i in range(n_rows):
        for l in range(n_cols):
            scaled = max(matrix[i][l], 0.0) * d
            base = int(scaled)
            units[i][l] = base
            remainders[i][l] = scaled - base

    cap_units = []
    for i, cap in enumerate(row_caps):
        cu = (cap * d).numerator // (cap * d).denominator  # floor(cap*d)
        cap_units.append(cu)

    for l in range(n_cols):
        total = column_totals[l] * d
        if total.denominator != 1:
            raise ValueError(
                f"column total {column_totals[l]} not representable on 1/{d} grid"
            )
        target = total.numerator
        have = sum(units[i][l] for i in range(n_rows))
        if have > target:
            # floor overshoot can only happen via float noise; trim from the
            # smallest-remainder rows
            order = sorted(range(n_rows), key=lambda i: (remainders[i][l], -i))
            for i in order:
                if have == target:
                    break
                take = min(units[i][l], have - target)
                units[i][l] -= take
                have -= take
        while have < target:
            candidates = [
                i
                for i in range(n_rows)
                if sum(units[i]) < cap_units[i]
            ]
            if not candidates:
                raise ValueError("grid rounding stuck: no cap slack left")
            best = max(candidates, key=lambda i: (remainders[i][l], -i))
            units[best][l] += 1
            remainders[best][l] = max(remainders[best][l] - 1.0, 0.0)
            have += 1

    return tuple(
        tuple(Fraction(units[i][l], d) for l in range(n_cols)) for i in range(n_rows)
    )
