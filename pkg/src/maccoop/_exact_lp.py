"""Small exact-arithmetic linear programming over Fractions.

Two-phase tableau simplex with Bland's rule, used to guard feasibility
verdicts near degeneracy (where floating point could flip a sign) and as
an independent oracle in tests.  Sized for the package's core checks:
tens of variables and constraints, not more.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

Status = str  # "optimal" | "infeasible" | "unbounded"


def _to_fraction_matrix(rows) -> list[list[Fraction]]:
    return [[Fraction(x) for x in row] for row in rows]


def _simplex(tableau: list[list[Fraction]], basis: list[int], cost_row: list[Fraction]):
    """Minimize over a tableau in canonical form; Bland's rule, in place.

    ``tableau`` rows are [a_1 ... a_n | b]; ``cost_row`` is the reduced
    cost vector [c_1 ... c_n | -objective].  Returns the status.
    """
    m = len(tableau)
    n = len(cost_row) - 1
    while True:
        enter = -1
        for j in range(n):
            if cost_row[j] < 0:
                enter = j
                break
        if enter < 0:
            return "optimal"
        leave = -1
        best = None
        for i in range(m):
            a = tableau[i][enter]
            if a > 0:
                ratio = tableau[i][-1] / a
                if best is None or ratio < best or (
                    ratio == best and basis[i] < basis[leave]
                ):
                    best = ratio
                    leave = i
        if leave < 0:
            return "unbounded"
        piv = tableau[leave][enter]
        tableau[leave] = [x / piv for x in tableau[leave]]
        for i in range(m):
            if i != leave and tableau[i][enter] != 0:
                f = tableau[i][enter]
                tableau[i] = [x - f * y for x, y in zip(tableau[i], tableau[leave])]
        if cost_row[enter] != 0:
            f = cost_row[enter]
            cost_row[:] = [x - f * y for x, y in zip(cost_row, tableau[leave])]
        basis[leave] = enter


def exact_lp_max(
    c: Sequence,
    a_ub: Sequence[Sequence] = (),
    b_ub: Sequence = (),
    a_eq: Sequence[Sequence] = (),
    b_eq: Sequence = (),
) -> tuple[Status, Fraction | None, list[Fraction] | None]:
    """Maximize c'x subject to a_ub x <= b_ub and a_eq x = b_eq, x free.

    All data is taken as exact rationals.  Free variables are encoded as
    x_i = y_i - y_shift with one shared nonnegative shift variable.

    Returns (status, optimal value, x) with value/x ``None`` unless
    optimal.
    """
    c = [Fraction(x) for x in c]
    a_ub = _to_fraction_matrix(a_ub)
    b_ub = [Fraction(x) for x in b_ub]
    a_eq = _to_fraction_matrix(a_eq)
    b_eq = [Fraction(x) for x in b_eq]
    n = len(c)
    m_ub = len(a_ub)
    m_eq = len(a_eq)
    m = m_ub + m_eq
    # columns: y_1..y_n, y_shift, slacks (one per <= row), artificials (one per row)
    n_core = n + 1
    n_slack = m_ub
    n_art = m
    width = n_core + n_slack + n_art

    tableau: list[list[Fraction]] = []
    rows = [(row, rhs, True) for row, rhs in zip(a_ub, b_ub)]
    rows += [(row, rhs, False) for row, rhs in zip(a_eq, b_eq)]
    for i, (row, rhs, is_ub) in enumerate(rows):
        line = [Fraction(0)] * (width + 1)
        for j in range(n):
            line[j] = Fraction(row[j])
        line[n] = -sum(Fraction(x) for x in row)  # shared shift column
        if is_ub:
            line[n_core + i] = Fraction(1)
        line[-1] = Fraction(rhs)
        if line[-1] < 0:
            line = [-x for x in line]
        tableau.append(line)

    basis = []
    for i in range(m):
        col = n_core + n_slack + i
        tableau[i][col] = Fraction(1)
        basis.append(col)

    # phase 1: minimize the sum of artificials
    cost = [Fraction(0)] * (width + 1)
    for i in range(m):
        cost = [x - y for x, y in zip(cost, tableau[i])]
    for j in range(n_core + n_slack, width):
        cost[j] = Fraction(0)
    status = _simplex(tableau, basis, cost)
    if status != "optimal" or cost[-1] != 0:
        return "infeasible", None, None
    # pivot any artificial still in the basis out (or drop its row)
    for i in range(m):
        if basis[i] >= n_core + n_slack:
            for j in range(n_core + n_slack):
                if tableau[i][j] != 0:
                    piv = tableau[i][j]
                    tableau[i] = [x / piv for x in tableau[i]]
                    for r in range(m):
                        if r != i and tableau[r][j] != 0:
                            f = tableau[r][j]
                            tableau[r] = [x - f * y for x, y in zip(tableau[r], tableau[i])]
                    basis[i] = j
                    break

    # phase 2: minimize -c (maximize c); rebuild reduced costs
    cost = [Fraction(0)] * (width + 1)
    for j in range(n):
        cost[j] = -c[j]
    cost[n] = sum(c)
    for j in range(n_core + n_slack, width):
        cost[j] = Fraction(10**30)  # keep artificials priced out
    for i in range(m):
        if cost[basis[i]] != 0:
            f = cost[basis[i]]
            cost = [x - f * y for x, y in zip(cost, tableau[i])]
    status = _simplex(tableau, basis, cost)
    if status != "optimal":
        return status, None, None
    solution = [Fraction(0)] * (n_core + n_slack)
    for i in range(m):
        if basis[i] < n_core + n_slack:
            solution[basis[i]] = tableau[i][-1]
    x = [solution[j] - solution[n] for j in range(n)]
    return "optimal", cost[-1], x
