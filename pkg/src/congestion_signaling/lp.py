"""Thin linear-programming layer over :func:`scipy.optimize.linprog` (HiGHS).

Every LP in the package goes through :func:`solve_lp` so the solve count can
be audited (see :class:`LpCounter`).
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

FEAS_TOL = 1e-7


class LpError(RuntimeError):
    pass


class LpInfeasible(LpError):
    pass


class LpUnbounded(LpError):
    pass


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None


class LpCounter:
    def __init__(self):
        self.count = 0


_counters: list[LpCounter] = []


@contextmanager
def count_lps() -> Iterator[LpCounter]:
    """Count :func:`solve_lp` calls made inside the ``with`` block."""
    counter = LpCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, bounds=None, method: str = "highs") -> LpResult:
    """Minimize ``c @ z`` s.t. ``A_eq z = b_eq``, ``A_ub z <= b_ub`` and bounds.

    ``method="highs-ds"`` forces dual simplex so the answer is a vertex.
    """
    for counter in _counters:
        counter.count += 1
    c = np.asarray(c, dtype=float)
    res = linprog(
        c,
        A_ub=_as_sparse(A_ub), b_ub=b_ub,
        A_eq=_as_sparse(A_eq), b_eq=b_eq,
        bounds=bounds, method=method,
        options={"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": FEAS_TOL},
    )
    if res.status == 0:
        return LpResult("optimal", res.x, float(res.fun))
    if res.status == 2:
        return LpResult("infeasible", None, None)
    if res.status == 3:
        return LpResult("unbounded", None, None)
    raise LpError(f"LP solver failed: {res.message}")


def _as_sparse(A):
    if A is None:
        return None
    if sparse.issparse(A):
        return A.tocsr()
    A = np.asarray(A, dtype=float)
    return None if A.size == 0 else A


class RowBuilder:
    """Accumulates sparse constraint rows as (row, col, value) triplets."""

    def __init__(self, n_cols: int):
        self.n_cols = n_cols
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []

    def add(self, coeffs: dict[int, float], rhs: float = 0.0) -> None:
        r = len(self.rhs)
        for col, val in coeffs.items():
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(rhs)

    def __len__(self):
        return len(self.rhs)

    def matrix(self):
        if not self.rhs:
            return None, None
        A = sparse.coo_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), self.n_cols))
        return A.tocsr(), np.asarray(self.rhs, dtype=float)
