"""Dense two-phase simplex for small exact linear programs.

Solves  max c@x  s.t.  A@x = b, x >= 0  with b >= 0.  Bland's rule
(lowest-index entering and leaving variables) rules out cycling, which
matters more than speed at the instance sizes used here (a few dozen
variables at most).
"""

from __future__ import annotations

import numpy as np


class InfeasibleError(ValueError):
    pass


class UnboundedError(ValueError):
    pass


def _iterate(T, basis, costs, tol):
    """Pivot the canonical tableau to optimality under Bland's rule."""
    m = T.shape[0]
    while True:
        cb = costs[basis]
        reduced = costs - cb @ T[:, :-1]
        reduced[basis] = 0.0
        entering = -1
        for j in range(T.shape[1] - 1):
            if reduced[j] > tol:
                entering = j
                break
        if entering < 0:
            return
        leaving, best_ratio = -1, np.inf
        for i in range(m):
            a = T[i, entering]
            if a > tol:
                ratio = T[i, -1] / a
                if ratio < best_ratio - tol or (
                    abs(ratio - best_ratio) <= tol
                    and (leaving < 0 or basis[i] < basis[leaving])
                ):
                    leaving, best_ratio = i, ratio
        if leaving < 0:
            raise UnboundedError("objective unbounded above")
        piv = T[leaving, entering]
        T[leaving] /= piv
        for i in range(m):
            if i != leaving and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering


def simplex_max(A, b, c, tol=1e-9):
    """Returns (optimal value, optimal x)."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).copy()
    c = np.asarray(c, dtype=np.float64)
    m, n = A.shape
    if np.any(b < -tol):
        raise ValueError("standard form requires b >= 0")
    b = np.maximum(b, 0.0)

    # phase 1: artificial basis, maximize -(sum of artificials)
    T = np.zeros((m, n + m + 1))
    T[:, :n] = A
    T[:, n : n + m] = np.eye(m)
    T[:, -1] = b
    basis = list(range(n, n + m))
    costs1 = np.concatenate([np.zeros(n), -np.ones(m)])
    _iterate(T, basis, costs1, tol)
    if -(costs1[basis] @ T[:, -1]) > 1e-7:
        raise InfeasibleError("no feasible point")

    # pivot out any artificial still basic; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n:
            piv_col = next((j for j in range(n) if abs(T[i, j]) > tol), None)
            if piv_col is None:
                continue  # redundant constraint
            piv = T[i, piv_col]
            T[i] /= piv
            for k in range(m):
                if k != i and T[k, piv_col] != 0.0:
                    T[k] -= T[k, piv_col] * T[i]
            basis[i] = piv_col
        keep.append(i)
    T = T[keep][:, list(range(n)) + [n + m]]
    basis = [basis[i] for i in keep]

    costs2 = c.copy()
    _iterate(T, basis, costs2, tol)
    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    return float(c @ x), x
