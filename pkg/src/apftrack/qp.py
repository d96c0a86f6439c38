"""Small dense QP solver:  min  -x'M + x'Nx   s.t.  A x <= b.

If the unconstrained optimum x = 0.5 N^-1 M is feasible it is returned as is.
Otherwise Hildreth's procedure runs Gauss-Seidel coordinate ascent on the
dual, which needs nothing but the dual Hessian and warm-starts cheaply.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import linprog


class QpInfeasible(ValueError):
    pass


class QpWarning(RuntimeWarning):
    pass


@dataclass
class QpResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float
    lam: np.ndarray
    unconstrained: bool
    max_violation: float

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.lam > 0)


@numba.njit(cache=True)
def _hildreth(P, d, lam, max_iter, tol):
    m = len(d)
    for it in range(max_iter):
        change = 0.0
        for i in range(m):
            w = d[i]
            for j in range(m):
                w += P[i, j] * lam[j]
            w -= P[i, i] * lam[i]
            new = -w / P[i, i]
            if new < 0.0:
                new = 0.0
            delta = abs(new - lam[i])
            if delta > change:
                change = delta
            lam[i] = new
        if change < tol:
            return it + 1
    return max_iter


def objective(x, M, N) -> float:
    return float(-x @ M + x @ N @ x)


def _kkt_residual(x, lam, A, b) -> tuple[float, float]:
    """(residual, primal violation).  Complementarity is measured relative
    to the multiplier scale, which follows the size of the weights."""
    g = A @ x - b
    if not len(g):
        return 0.0, 0.0
    viol = float(max(np.max(g), 0.0))
    comp = float(np.max(np.abs(lam * g))) / max(1.0, float(np.max(lam)))
    return max(viol, comp), viol


def solve_qp(M, N, A=None, b=None, *, lam0=None, max_iter: int = 500, tol: float = 1e-8) -> QpResult:
    """Minimise -x'M + x'Nx subject to A x <= b.

    Returns the unconstrained optimum when it satisfies every row. If the
    dual iteration hits ``max_iter`` the best iterate found is returned with
    ``converged=False`` and a QpWarning; if the rows admit no solution at all
    QpInfeasible is raised.
    """
    M = np.asarray(M, dtype=float).reshape(-1)
    N = np.asarray(N, dtype=float)
    N = 0.5 * (N + N.T)
    n = len(M)
    try:
        L = np.linalg.cholesky(N)
    except np.linalg.LinAlgError as exc:
        raise ValueError("N is not positive definite") from exc

    def n_solve(v):
        return np.linalg.solve(L.T, np.linalg.solve(L, v))

    x0 = 0.5 * n_solve(M)
    if A is None or len(A) == 0:
        return QpResult(x0, True, 0, 0.0, np.zeros(0), True, 0.0)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    if np.all(A @ x0 <= b):
        return QpResult(x0, True, 0, 0.0, np.zeros(len(b)), True, 0.0)

    # with H = 2N, f = -M:  x(lam) = x0 - H^-1 A' lam
    HinvAt = 0.5 * n_solve(A.T)
    P = A @ HinvAt
    d = b - A @ x0
    lam = np.zeros(len(b)) if lam0 is None or len(lam0) != len(b) else np.maximum(np.asarray(lam0, float), 0.0)
    lam = np.ascontiguousarray(lam)
    diag = np.diag(P).copy()
    # rows that are all zero carry no information; keep their multipliers at 0
    dead = diag <= 1e-14
    if np.any(dead):
        if np.any(d[dead] < -1e-12):
            raise QpInfeasible("a constant constraint row is violated")
        P = P.copy()
        P[dead, :] = 0.0
        P[:, dead] = 0.0
        P[dead, dead] = 1.0
        d = d.copy()
        d[dead] = 0.0
        lam[dead] = 0.0
    iters = 0
    best = None
    while True:
        chunk = min(50, max_iter - iters)
        iters += _hildreth(P, d, lam, chunk, tol * 1e-2)
        x = x0 - HinvAt @ lam
        res, viol = _kkt_residual(x, lam, A, b)
        if res >= tol:
            polished = _polish(N, M, A, b, lam, x, tol)
            if polished is not None:
                x, lam_p = polished
                res, viol = _kkt_residual(x, lam_p, A, b)
                lam = np.ascontiguousarray(lam_p)
        if best is None or (viol, res) < (best[2], best[1]):
            best = (x, res, viol, lam.copy())
        if res < tol or iters >= max_iter:
            break
    x, res, viol, lam_best = best
    if res < tol:
        return QpResult(x, True, iters, res, lam_best, False, viol)
    if _infeasible(A, b):
        raise QpInfeasible("constraint set is empty")
    warnings.warn(f"QP iteration cap reached (residual {res:.2e})", QpWarning, stacklevel=2)
    return QpResult(x, False, iters, res, lam_best, False, viol)


def _feasible_near(A, b, x):
    """Feasible point closest to ``x`` in the max norm, or None."""
    n = len(x)
    # variables (y, t): min t  s.t.  |y - x| <= t,  A y <= b
    c = np.zeros(n + 1)
    c[-1] = 1.0
    eye = np.eye(n)
    one = np.ones((n, 1))
    A_ub = np.block([[eye, -one], [-eye, -one], [A, np.zeros((len(b), 1))]])
    b_ub = np.concatenate([x, -x, b])
    r = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * n + [(0, None)], method="highs")
    return r.x[:n] if r.status == 0 else None


def _eqp(G, g, Aw):
    """Step p and multipliers for  min 0.5 p'Gp + g'p  s.t.  Aw p = 0."""
    n = len(g)
    k = len(Aw)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = G
    K[:n, n:] = Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=1e-14)[0]
    return sol[:n], sol[n:]


def _polish(N, M, A, b, lam, x, tol, max_steps: int | None = None):
    """Primal active-set finish started from the dual iterate.

    The iterate is first moved to the nearest feasible point if it violates
    any row. Returns (x, lam) at a KKT point, else None.
    """
    m, n = A.shape
    if np.max(A @ x - b) > tol:
        x = _feasible_near(A, b, x)
        if x is None:
            return None
    G = 2.0 * N
    # independent subset of the rows touching x, strongest multipliers first
    touching = np.flatnonzero(A @ x - b > -tol)
    order = touching[np.argsort(-lam[touching])]
    work: list[int] = []
    for i in order:
        cand = work + [int(i)]
        if len(cand) <= n and np.linalg.matrix_rank(A[cand]) == len(cand):
            work = cand
    if max_steps is None:
        max_steps = 4 * (m + n)
    for _ in range(max_steps):
        g = G @ x - M
        p, la = _eqp(G, g, A[work] if work else np.zeros((0, n)))
        if float(np.max(np.abs(p))) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
            if not work or np.min(la) >= -1e-9 * max(1.0, float(np.max(np.abs(la)))):
                out = np.zeros(m)
                out[work] = np.maximum(la, 0.0)
                return x, out
            del work[int(np.argmin(la))]
            continue
        Ap = A @ p
        slack = b - A @ x
        alpha, block = 1.0, -1
        for i in np.flatnonzero(Ap > 1e-14):
            if i in work:
                continue
            a = max(slack[i], 0.0) / Ap[i]
            if a < alpha:
                alpha, block = a, int(i)
        x = x + alpha * p
        if block >= 0:
            work.append(block)
    return None


def _infeasible(A, b) -> bool:
    n = A.shape[1]
    r = linprog(np.zeros(n), A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
    return r.status == 2
