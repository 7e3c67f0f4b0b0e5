"""Exact-rational LP reference: enumerate basic solutions with Fractions.

Independent of the float simplex path: solves max c.x, A x <= b, x >= 0 by
adding slacks and checking every basis of [A | I] in exact arithmetic.
Only intended for tiny instances (combinatorial in the number of columns).
"""

from fractions import Fraction
from itertools import combinations


def _solve_square(mat, rhs):
    """Exact Gaussian elimination; returns None when the matrix is singular."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(mat)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            return None
        a[col], a[pivot] = a[pivot], a[col]
        inv = Fraction(1, 1) / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def exact_lp_max(c, a, b):
    """Returns (status, objective) with objective a Fraction when optimal."""
    m, n = len(b), len(c)
    c = [Fraction(v) for v in c]
    b = [Fraction(v) for v in b]
    cols = []
    for j in range(n):
        cols.append([Fraction(a[i][j]) for i in range(m)])
    for i in range(m):
        cols.append([Fraction(1 if r == i else 0) for r in range(m)])

    best = None
    for basis in combinations(range(n + m), m):
        mat = [[cols[j][i] for j in basis] for i in range(m)]
        sol = _solve_square(mat, b)
        if sol is None or any(v < 0 for v in sol):
            continue
        x = [Fraction(0)] * (n + m)
        for j, v in zip(basis, sol):
            x[j] = v
        obj = sum(ci * xi for ci, xi in zip(c, x[:n]))
        if best is None or obj > best:
            best = obj
    if best is None:
        return "infeasible", None
    return "optimal", best
