"""Dense two-phase tableau simplex with Bland's rule.

Solves

    minimize c @ x  subject to  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  x >= 0

for the few-hundred-variable programs that appear in the control problems.
An identity block is carried along the tableau so that ``B^{-1}`` (and hence
the dual multipliers) is available at the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, UnboundedError


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    slack: np.ndarray       # b_ub - A_ub @ x
    duals_ub: np.ndarray    # d fun / d b_ub, <= 0
    duals_eq: np.ndarray    # d fun / d b_eq
    reduced_costs: np.ndarray
    iterations: int


def _as_2d(A, ncols):
    if A is None:
        return np.zeros((0, ncols))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != ncols:
        raise ValueError("constraint matrix has the wrong number of columns")
    return A


class _Tableau:
    def __init__(self, T, basis, n_eligible, tol):
        self.T = T              # rows: constraints, last column: rhs
        self.basis = basis
        self.n_eligible = n_eligible
        self.tol = tol
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        colvals = T[:, col].copy()
        colvals[row] = 0.0
        T -= np.outer(colvals, T[row])
        self.basis[row] = col
        self.iterations += 1

    def reduced_costs(self, cost):
        cb = cost[self.basis]
        return cost - cb @ self.T[:, :-1]

    def run(self, cost, max_iter):
        tol = self.tol
        while True:
            if self.iterations >= max_iter:
                raise RuntimeError("simplex iteration limit reached")
            rc = self.reduced_costs(cost)[: self.n_eligible]
            candidates = np.nonzero(rc < -tol)[0]
            if candidates.size == 0:
                return
            col = int(candidates[0])            # Bland: lowest index enters
            column = self.T[:, col]
            positive = column > tol
            if not positive.any():
                raise UnboundedError("linear program is unbounded below")
            ratios = np.full(column.shape, np.inf)
            ratios[positive] = self.T[positive, -1] / column[positive]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + tol * max(1.0, abs(best)))[0]
            # Bland: among tied rows, the lowest basic variable index leaves
            row = int(min(ties, key=lambda r: self.basis[r]))
            self.pivot(row, col)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol=1e-9, max_iter=100000) -> LPResult:
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = _as_2d(A_ub, nv)
    A_eq = _as_2d(A_eq, nv)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # [x | slacks | artificials | tracking identity | rhs]
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = A_ub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign

    needs_art = [i for i in range(m) if not (i < m_ub and sign[i] > 0)]
    n_art = len(needs_art)
    n_struct = nv + m_ub
    width = n_struct + n_art + m + 1
    T = np.zeros((m, width))
    T[:, :n_struct] = A
    basis = np.empty(m, dtype=int)
    for i in range(m_ub):
        basis[i] = nv + i
    for k, i in enumerate(needs_art):
        T[i, n_struct + k] = 1.0
        basis[i] = n_struct + k
    T[:, n_struct + n_art: n_struct + n_art + m] = np.eye(m)
    T[:, -1] = b

    tab = _Tableau(T, basis, n_struct + n_art, tol)
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    if n_art:
        phase1 = np.zeros(width - 1)
        phase1[n_struct: n_struct + n_art] = 1.0
        tab.run(phase1, max_iter)
        infeas = float(phase1[tab.basis] @ tab.T[:, -1])
        if infeas > 1e-7 * scale:
            raise InfeasibleError("linear program is infeasible")
        # drive artificials out of the basis where possible
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n_struct and tab.basis[r] < n_struct + n_art:
                row = tab.T[r, :n_struct]
                nz = np.nonzero(np.abs(row) > tol)[0]
                if nz.size:
                    tab.pivot(r, int(nz[np.argmax(np.abs(row[nz]))]))
                else:
                    keep[r] = False    # redundant equality
        if not keep.all():
            tab.T = tab.T[keep]
            tab.basis = tab.basis[keep]
    tab.n_eligible = n_struct
    cost = np.zeros(width - 1)
    cost[:nv] = c
    tab.run(cost, max_iter)

    full = np.zeros(width - 1)
    full[tab.basis] = tab.T[:, -1]
    x = full[:nv]
    # B^{-1} sits in the tracking block; rows dropped as redundant get zero duals
    Binv = tab.T[:, n_struct + n_art: n_struct + n_art + m]
    y_flipped = cost[tab.basis] @ Binv
    y = y_flipped * sign
    rc = c - np.concatenate([A_ub, A_eq]).T @ y
    slack = b_ub - A_ub @ x
    return LPResult(x=x, fun=float(c @ x), slack=slack, duals_ub=y[:m_ub],
                    duals_eq=y[m_ub:], reduced_costs=rc, iterations=tab.iterations)
