"""
Dense convex quadratic programming.

Solves small problems of the form::

    min  1/2 x^T H x + g^T x
    s.t. A_ineq x <= b_ineq
         A_eq x    = b_eq

with a primal active-set method. ``H`` only has to be positive
semi-definite: directions of zero curvature are followed as rays until a
constraint blocks them, so purely linear variables (e.g. penalty slacks)
are handled without regularizing the objective.

The solution carries inequality multipliers ``lam >= 0`` and equality
multipliers ``mu`` such that::

    H x + g + A_ineq^T lam + A_eq^T mu = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

FEAS_TOL = 1e-9
_STEP_TOL = 1e-14


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass
class QpProblem:
    """Problem data; missing constraint blocks default to empty."""

    H: np.ndarray
    g: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        scale = max(1.0, np.abs(self.H).max(initial=0.0))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("H must be symmetric")
        self.A_ineq, self.b_ineq = _block(self.A_ineq, self.b_ineq, n, "inequality")
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "equality")

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


def _block(A, b, n, name):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.size == 0:
        return np.zeros((0, n)), np.zeros(0)
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{name} block has shape {A.shape} with rhs of length {b.size}")
    return A, b


@dataclass
class QpSolution:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    status: QpStatus
    iterations: int = 0
    objective: float = float("nan")
    # Minimal total constraint violation found by phase 1 (0 when feasible).
    infeasibility: float = 0.0
    active: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == QpStatus.OPTIMAL


def kkt_residual(p: QpProblem, sol: QpSolution) -> float:
    """Largest violation among stationarity, feasibility, dual sign and complementarity."""
    x, lam, mu = sol.x, sol.lam, sol.mu
    stat = p.H @ x + p.g + p.A_ineq.T @ lam + p.A_eq.T @ mu
    slack = p.A_ineq @ x - p.b_ineq
    terms = [
        np.abs(stat).max(initial=0.0),
        np.maximum(slack, 0.0).max(initial=0.0),
        np.abs(p.A_eq @ x - p.b_eq).max(initial=0.0),
        np.maximum(-lam, 0.0).max(initial=0.0),
        np.abs(lam * slack).max(initial=0.0),
    ]
    return float(max(terms))


class _Basis:
    """SVD of the working matrix: its null space plus least-squares solves with it."""

    def __init__(self, W: np.ndarray, n: int):
        self.m = W.shape[0]
        self.rank = 0
        if self.m == 0:
            self.Z = np.eye(n)
            return
        U, sv, Vt = np.linalg.svd(W)
        tol = max(W.shape) * np.finfo(float).eps * sv[0]
        r = int(np.count_nonzero(sv > tol))
        self.rank = r
        self.U, self.sv, self.V = U[:, :r], sv[:r], Vt[:r].T
        self.Z = Vt[r:].T

    def solve(self, rhs):
        """Least-norm ``x`` minimizing ``|W x - rhs|``."""
        if self.rank == 0:
            return np.zeros(self.Z.shape[0])
        return self.V @ ((self.U.T @ rhs) / self.sv)

    def solve_transposed(self, rhs):
        """Least-norm ``y`` minimizing ``|W^T y - rhs|``."""
        if self.rank == 0:
            return np.zeros(self.m)
        return self.U @ ((self.V.T @ rhs) / self.sv)


def _active_set(p: QpProblem, x: np.ndarray, working: list, max_iter: int):
    """Primal active-set iterations from a feasible ``x``.

    ``working`` holds indices of inequality rows treated as equalities.
    Returns (x, lam, mu, status, iterations, working).
    """
    n = p.n
    A, b = p.A_ineq, p.b_ineq
    Ae = p.A_eq
    m = A.shape[0]
    hscale = max(1.0, np.abs(p.H).max(initial=0.0))
    # H = c I (c > 0) needs no reduced eigendecomposition
    c_iso = p.H[0, 0] if n else 0.0
    isotropic = c_iso > 0 and np.array_equal(p.H, c_iso * np.eye(n))
    cached = (None, None)

    # set after an unblocked Newton step: x then minimizes over the working
    # set in exact arithmetic, so recomputing a step would only chase rounding
    settled = False
    for it in range(1, max_iter + 1):
        W = np.vstack([Ae, A[working]]) if working else Ae
        if cached[0] != working:
            cached = (list(working), _Basis(W, n))
        basis = cached[1]
        if W.shape[0]:
            # land exactly on the working rows (they may only be active to FEAS_TOL)
            rhs = np.concatenate([p.b_eq, b[working]]) - W @ x
            if np.abs(rhs).max() > 0:
                x = x + basis.solve(rhs)
        grad = p.H @ x + p.g
        step = np.zeros(n)
        ray = False
        if not settled:
            Z = basis.Z
            if Z.shape[1] > 0 and isotropic:
                step = -Z @ (Z.T @ grad) / c_iso
            elif Z.shape[1] > 0:
                Hr = Z.T @ p.H @ Z
                gr = Z.T @ grad
                evals, evecs = np.linalg.eigh(0.5 * (Hr + Hr.T))
                flat = evals <= 1e-11 * hscale
                coef = evecs.T @ gr
                gscale = max(1.0, np.abs(grad).max())
                descent = flat & (np.abs(coef) > 1e-12 * gscale)
                if descent.any():
                    # zero-curvature descent: follow the ray to the first blocking row
                    step = -Z @ (evecs[:, descent] @ coef[descent])
                    ray = True
                else:
                    curved = ~flat
                    step = -Z @ (evecs[:, curved] @ (coef[curved] / evals[curved]))

        if settled or (not ray and np.linalg.norm(step) <= _STEP_TOL * max(1.0, np.linalg.norm(x))):
            settled = False
            sol = basis.solve_transposed(-grad)
            lam_w, mu = sol[Ae.shape[0]:], sol[:Ae.shape[0]]
            if not working or lam_w.min() >= -1e-12 * max(1.0, np.abs(grad).max()):
                lam = np.zeros(m)
                lam[working] = np.maximum(lam_w, 0.0)
                return x, lam, mu, QpStatus.OPTIMAL, it, working
            # drop the most negative multiplier; lowest index on ties
            order = sorted(range(len(working)), key=lambda k: (lam_w[k], working[k]))
            working = [w for k, w in enumerate(working) if k != order[0]]
            continue

        Ap = A @ step
        t_max = np.inf if ray else 1.0
        blocking = None
        thresh = 1e-14 * max(1.0, np.linalg.norm(step))
        cand = Ap > thresh
        cand[working] = False
        if cand.any():
            idx = np.flatnonzero(cand)
            ratios = np.maximum((b[idx] - A[idx] @ x) / Ap[idx], 0.0)
            # smallest ratio wins, lowest index on ties (argmin returns the first)
            k = int(np.argmin(ratios))
            if ratios[k] <= t_max:
                t_max, blocking = float(ratios[k]), int(idx[k])
        if not np.isfinite(t_max):
            return x, np.zeros(m), np.zeros(Ae.shape[0]), QpStatus.UNBOUNDED, it, working
        x = x + t_max * step
        if blocking is not None:
            working = working + [blocking]
        elif not ray:
            settled = True
    return x, np.zeros(m), np.zeros(Ae.shape[0]), QpStatus.MAX_ITER, max_iter, working


def _initial_working(p: QpProblem, x: np.ndarray) -> list:
    """Active rows at ``x`` that are independent of the equalities and each other."""
    working = []
    Q = np.zeros((0, p.n))
    for row in p.A_eq:
        Q = _orthogonalize(Q, row)[0]
    slack = p.b_ineq - p.A_ineq @ x
    for i in np.flatnonzero(np.abs(slack) <= FEAS_TOL):
        if Q.shape[0] >= p.n:
            break
        Q, added = _orthogonalize(Q, p.A_ineq[i])
        if added:
            working.append(int(i))
    return working


def _orthogonalize(Q: np.ndarray, row: np.ndarray):
    """Extend the orthonormal rows ``Q`` by ``row``'s orthogonal component.

    Returns ``(Q, added)``; ``added`` is False when that component is negligible.
    """
    r = np.asarray(row, dtype=float)
    scale = max(np.linalg.norm(r), 1e-300)
    if Q.shape[0]:
        r = r - Q.T @ (Q @ r)
        r = r - Q.T @ (Q @ r)
    norm = np.linalg.norm(r)
    if norm <= 1e-10 * scale:
        return Q, False
    return np.vstack([Q, r / norm]), True


def _phase_one(p: QpProblem, max_iter: int):
    """Minimize the largest inequality violation ``t`` over the equality solutions.

    Returns ``(x, violation, status)``.
    """
    n, m, me = p.n, p.A_ineq.shape[0], p.A_eq.shape[0]
    x0 = np.zeros(n)
    if me:
        x0, *_ = np.linalg.lstsq(p.A_eq, p.b_eq, rcond=None)
        resid = float(np.abs(p.A_eq @ x0 - p.b_eq).max())
        if resid > FEAS_TOL:
            return x0, resid, QpStatus.INFEASIBLE
    if m == 0:
        return x0, 0.0, QpStatus.OPTIMAL
    # variables (x, t): A x - t <= b, t >= 0
    A = np.zeros((m + 1, n + 1))
    A[:m, :n] = p.A_ineq
    A[:m, n] = -1.0
    A[m, n] = -1.0
    b = np.concatenate([p.b_ineq, [0.0]])
    Aeq = np.hstack([p.A_eq, np.zeros((me, 1))])
    g = np.zeros(n + 1)
    g[n] = 1.0
    z0 = np.concatenate([x0, [max(float(np.max(p.A_ineq @ x0 - p.b_ineq)), 0.0)]])
    aux = QpProblem(np.zeros((n + 1, n + 1)), g, A, b, Aeq, p.b_eq)
    z, _, _, status, _, _ = _active_set(aux, z0, _initial_working(aux, z0), max_iter)
    return z[:n], max(float(z[n]), 0.0), status


def solve_qp(p: QpProblem, x0: Optional[np.ndarray] = None, max_iter: int = 500) -> QpSolution:
    """Solve ``p``; ``x0``, if given, must be feasible and is used as the starting point."""
    n, m, me = p.n, p.A_ineq.shape[0], p.A_eq.shape[0]
    if x0 is None or _violation(p, np.asarray(x0, float)) > FEAS_TOL:
        x0, viol, status = _phase_one(p, max_iter)
        if status == QpStatus.MAX_ITER:
            return QpSolution(x0, np.zeros(m), np.zeros(me), QpStatus.MAX_ITER, infeasibility=viol)
        if _violation(p, x0) > FEAS_TOL:
            return QpSolution(x0, np.zeros(m), np.zeros(me), QpStatus.INFEASIBLE,
                              infeasibility=max(viol, _violation(p, x0)))
    x0 = np.asarray(x0, dtype=float).copy()
    x, lam, mu, status, its, working = _active_set(p, x0, _initial_working(p, x0), max_iter)
    sol = QpSolution(x, lam, mu, status, its, p.objective(x), active=sorted(working))
    return sol


def _violation(p: QpProblem, x: np.ndarray) -> float:
    v = [np.maximum(p.A_ineq @ x - p.b_ineq, 0.0).max(initial=0.0),
         np.abs(p.A_eq @ x - p.b_eq).max(initial=0.0)]
    return float(max(v))
