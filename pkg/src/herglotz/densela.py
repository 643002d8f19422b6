"""Gaussian elimination for the small per-step systems.

The systems assembled by :mod:`herglotz.mechanics` have ``n + h`` unknowns
with ``n + h`` rarely above a dozen and are rebuilt at every stage, so plain
Python lists beat numpy's call overhead here. Inputs may be nested lists or
2-D arrays.
"""
from __future__ import annotations

import math
from typing import Sequence

__all__ = ["SingularMatrixError", "solve", "rank_estimate", "matvec"]

PIVOT_RTOL = 1e-12


class SingularMatrixError(ArithmeticError):
    """A pivot fell below ``PIVOT_RTOL`` times the largest initial entry."""

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column


def _as_rows(A) -> list[list[float]]:
    rows = [[float(x) for x in row] for row in A]
    if not rows or not rows[0]:
        raise ValueError("matrix must have at least one row and one column")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged matrix")
    return rows


def solve(A, b) -> list[float]:
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    A : (n, n) array_like
    b : (n,) array_like

    Returns
    -------
    list of float

    Raises
    ------
    SingularMatrixError
        If a pivot magnitude drops below ``1e-12 * max|A_ij|``.
    ValueError
        On shape mismatch or non-finite input.
    """
    M = _as_rows(A)
    rhs = [float(x) for x in b]
    n = len(M)
    if len(M[0]) != n:
        raise ValueError(f"matrix is {n}x{len(M[0])}, expected square")
    if len(rhs) != n:
        raise ValueError(f"right-hand side has length {len(rhs)}, expected {n}")
    scale = 0.0
    for row in M:
        for x in row:
            if not math.isfinite(x):
                raise ValueError("matrix has non-finite entries")
            scale = max(scale, abs(x))
    if not all(math.isfinite(x) for x in rhs):
        raise ValueError("right-hand side has non-finite entries")
    tol = PIVOT_RTOL * scale
    if scale == 0.0:
        raise SingularMatrixError("zero matrix", 0)

    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(M[i][k]))
        if abs(M[p][k]) <= tol:
            raise SingularMatrixError(f"pivot {abs(M[p][k]):.3e} in column {k} below tolerance {tol:.3e}", k)
        if p != k:
            M[k], M[p] = M[p], M[k]
            rhs[k], rhs[p] = rhs[p], rhs[k]
        pivot_row = M[k]
        pivot = pivot_row[k]
        for i in range(k + 1, n):
            row = M[i]
            f = row[k] / pivot
            if f != 0.0:
                for j in range(k + 1, n):
                    row[j] -= f * pivot_row[j]
                rhs[i] -= f * rhs[k]
            row[k] = 0.0

    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        row = M[i]
        acc = rhs[i]
        for j in range(i + 1, n):
            acc -= row[j] * x[j]
        x[i] = acc / row[i]
    return x


def rank_estimate(A, tol: float) -> int:
    """Number of pivots above ``tol * max|A_ij|`` in a row echelon reduction."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = _as_rows(A)
    nrows, ncols = len(M), len(M[0])
    scale = max(abs(x) for row in M for x in row)
    if scale == 0.0:
        return 0
    threshold = tol * scale
    rank = 0
    for col in range(ncols):
        if rank == nrows:
            break
        p = max(range(rank, nrows), key=lambda i: abs(M[i][col]))
        if abs(M[p][col]) <= threshold:
            continue
        M[rank], M[p] = M[p], M[rank]
        pivot_row = M[rank]
        for i in range(rank + 1, nrows):
            f = M[i][col] / pivot_row[col]
            for j in range(col, ncols):
                M[i][j] -= f * pivot_row[j]
        rank += 1
    return rank


def matvec(A, x: Sequence[float]) -> list[float]:
    return [sum(a * b for a, b in zip(row, x)) for row in A]
