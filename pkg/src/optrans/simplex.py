"""Revised primal simplex for LPs in standard equality form.

Maximizes c'x subject to A x = b, x >= 0, with A given as a CSC sparse
matrix.  Two-phase start with artificial variables; the basis inverse is a
dense LU factorization refreshed every ``refactor_every`` pivots and patched
with product-form eta updates in between.  Pivot selection is Dantzig by
default; Bland's rule is available as a policy and kicks in automatically
after a run of degenerate pivots, which makes the method anti-cycling.
All tie-breaks are deterministic, so identical inputs give identical bases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve

from .errors import Infeasible, OptransError, Unbounded

PIVOT_TOL = 1e-10
REFACTOR_EVERY = 64
STALL_LIMIT = 400


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray  # primal solution over the original columns
    objective: float
    duals: np.ndarray  # row duals for the original rows (0 for dropped rows)
    basis: np.ndarray
    iterations: int
    degenerate: bool
    dropped_rows: tuple


def _ftran(lu, etas, v):
    # Solve B w = v with B = B0 * E1 * ... * Ek.
    w = lu_solve(lu, v, check_finite=False)
    for r, d in etas:
        t = w[r] / d[r]
        w -= t * d
        w[r] = t
    return w


def _btran(lu, etas, v):
    # Solve B' y = v.
    w = np.array(v, dtype=float)
    for r, d in reversed(etas):
        rest = d @ w - d[r] * w[r]
        w[r] = (w[r] - rest) / d[r]
    return lu_solve(lu, w, trans=1, check_finite=False)


def solve_standard_form(
    A: sp.csc_matrix,
    b: np.ndarray,
    c: np.ndarray,
    *,
    policy: str = "dantzig",
    pivot_tol: float = PIVOT_TOL,
    refactor_every: int = REFACTOR_EVERY,
    max_iter: int = 500_000,
    feas_tol: float = 1e-9,
) -> SimplexResult:
    """Two-phase revised simplex.  Raises Infeasible / Unbounded."""
    if policy not in ("dantzig", "bland"):
        raise OptransError(f"unknown pivot policy {policy!r}")
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape

    flip = b < 0
    if np.any(flip):
        A = sp.csc_matrix(sp.diags(np.where(flip, -1.0, 1.0)) @ A)
        b = np.abs(b)

    st = _State(A, b, n, m, policy, pivot_tol, refactor_every, max_iter)

    c1 = np.concatenate([np.zeros(n), -np.ones(m)])
    st.run(c1, phase=1)
    art_sum = -st.objective(c1)
    if art_sum > feas_tol * max(1.0, float(np.abs(b).sum())):
        raise Infeasible(f"phase-1 residual {art_sum:.3e}")
    st.purge_artificials()

    c2 = np.concatenate([c, np.zeros(m)])
    st.run(c2, phase=2)

    x = np.zeros(n)
    inside = st.basis < n
    x[st.basis[inside]] = st.xB[inside]
    duals = np.zeros(m)
    duals[st.live_rows] = st.duals(c2)
    return SimplexResult(
        status="optimal",
        x=x,
        objective=float(c @ x),
        duals=np.where(flip, -duals, duals),
        basis=st.basis.copy(),
        iterations=st.iterations,
        degenerate=bool(np.any(st.xB <= pivot_tol)),
        dropped_rows=tuple(int(i) for i in np.nonzero(~st.live_mask)[0]),
    )


class _State:
    def __init__(self, A, b, n, m, policy, pivot_tol, refactor_every, max_iter):
        self.A = A
        self.AT = sp.csr_matrix(A.T)
        self.b0 = b
        self.n = n
        self.m0 = m
        self.policy = policy
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.max_iter = max_iter
        self.iterations = 0
        self.live_mask = np.ones(m, dtype=bool)
        self.basis = np.arange(n, n + m)  # column j >= n is the artificial e_{j-n}
        self.lu = None
        self.etas = []
        self.xB = b.copy()

    @property
    def live_rows(self) -> np.ndarray:
        return np.nonzero(self.live_mask)[0]

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m0)
        if j < self.n:
            sl = slice(self.A.indptr[j], self.A.indptr[j + 1])
            col[self.A.indices[sl]] = self.A.data[sl]
        else:
            col[j - self.n] = 1.0
        return col[self.live_mask]

    def refactor(self):
        rows = self.live_rows
        B = np.empty((rows.size, rows.size))
        for i, j in enumerate(self.basis):
            B[:, i] = self._column(j)
        self.lu = lu_factor(B, check_finite=False)
        self.etas = []
        self.xB = _ftran(self.lu, self.etas, self.b0[rows])
        np.maximum(self.xB, 0.0, out=self.xB)

    def objective(self, c_full) -> float:
        return float(c_full[self.basis] @ self.xB)

    def duals(self, c_full) -> np.ndarray:
        return _btran(self.lu, self.etas, c_full[self.basis])

    def run(self, c_full, phase: int):
        self.refactor()
        n, tol = self.n, self.pivot_tol
        in_basis = np.zeros(n + self.m0, dtype=bool)
        in_basis[self.basis] = True
        stall = 0
        while True:
            if self.iterations >= self.max_iter:
                raise OptransError(f"simplex iteration cap {self.max_iter} hit")
            y_full = np.zeros(self.m0)
            y_full[self.live_rows] = self.duals(c_full)
            rc = c_full[:n] - self.AT @ y_full
            rc[in_basis[:n]] = -np.inf
            if phase == 1:
                rc_art = c_full[n:] - y_full
                rc_art[in_basis[n:]] = -np.inf
                rc_art[~self.live_mask] = -np.inf
            else:
                rc_art = None

            use_bland = self.policy == "bland" or stall > STALL_LIMIT
            j = self._entering(rc, rc_art, tol, use_bland)
            if j is None:
                return
            d = _ftran(self.lu, self.etas, self._column(j))
            r = self._leaving(d, use_bland)
            if r is None:
                raise Unbounded("no blocking basic variable")
            theta = self.xB[r] / d[r]
            stall = stall + 1 if theta <= 1e-13 else 0
            self.xB -= theta * d
            self.xB[r] = theta
            np.maximum(self.xB, 0.0, out=self.xB)
            in_basis[self.basis[r]] = False
            in_basis[j] = True
            self.basis[r] = j
            self.etas.append((r, d.copy()))
            self.iterations += 1
            if len(self.etas) >= self.refactor_every:
                self.refactor()

    def _entering(self, rc, rc_art, tol, use_bland) -> Optional[int]:
        if use_bland:
            pos = np.nonzero(rc > tol)[0]
            if pos.size:
                return int(pos[0])
            if rc_art is not None:
                pos = np.nonzero(rc_art > tol)[0]
                if pos.size:
                    return int(self.n + pos[0])
            return None
        best_j = None
        best_v = tol
        j = int(np.argmax(rc))
        if rc[j] > best_v:
            best_j, best_v = j, rc[j]
        if rc_art is not None:
            ja = int(np.argmax(rc_art))
            if rc_art[ja] > best_v:
                best_j = self.n + ja
        return best_j

    def _leaving(self, d, use_bland) -> Optional[int]:
        cand = np.nonzero(d > self.pivot_tol)[0]
        if cand.size == 0:
            return None
        ratios = self.xB[cand] / d[cand]
        rmin = np.min(ratios)
        ties = cand[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        if use_bland:
            return int(ties[np.argmin(self.basis[ties])])
        return int(ties[np.argmax(d[ties])])

    def purge_artificials(self):
        """Pivot basic artificials out; drop rows that prove redundant."""
        n = self.n
        guard = 0
        while guard <= self.m0 + 4:
            guard += 1
            art_pos = [i for i, j in enumerate(self.basis) if j >= n]
            if not art_pos:
                return
            i = art_pos[0]
            e = np.zeros(self.live_rows.size)
            e[i] = 1.0
            row = _btran(self.lu, self.etas, e)  # row i of the basis inverse
            row_full = np.zeros(self.m0)
            row_full[self.live_rows] = row
            coef = self.A.T @ row_full  # row i of B^{-1} A over original columns
            basic_orig = self.basis[self.basis < n]
            coef[basic_orig] = 0.0
            jbest = int(np.argmax(np.abs(coef)))
            if abs(coef[jbest]) > 1e-7:
                d = _ftran(self.lu, self.etas, self._column(jbest))
                theta = self.xB[i] / d[i]
                self.xB -= theta * d
                self.xB[i] = theta
                self.basis[i] = jbest
                self.etas.append((i, d.copy()))
                if len(self.etas) >= self.refactor_every:
                    self.refactor()
            else:
                # redundant constraint: drop the row with its artificial
                self.live_mask[self.basis[i] - n] = False
                self.basis = np.delete(self.basis, i)
                self.refactor()
        raise OptransError("artificial purge failed to terminate")
