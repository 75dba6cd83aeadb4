"""
Online feedback optimization controllers.

Three update rules are provided, all built on a projected-gradient step
over linearized constraints:

``plain``
    ``u+ = u + alpha w`` with ``w`` the projection of the negative gradient.
``gaussian``
    As ``plain`` but a Gaussian draw is added to the gradient inside the
    projection, which excites the plant with high probability.
``pe``
    ``u+ = u + alpha w + s``: the perturbation ``s`` is the cheapest one (as
    seen by the cost gradient) that keeps the newest input step out of the
    span of the previous ``n_u - 1`` steps. The rank condition is relaxed to
    ``|v_perp^T (alpha w + s)| >= epsilon`` with a lifted absolute value and
    an L1 penalty; the resulting bilevel problem is solved by alternating two
    convex QPs until they agree.

The ``oracle`` variant is ``plain`` fed with the true plant Jacobian.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import estimator as est
from .errors import NumericalError
from .qp import QpProblem, QpStatus, kkt_residual, solve_qp
from .sets import PolyhedralSet

log = logging.getLogger(__name__)

VARIANTS = ("plain", "gaussian", "pe", "oracle")

# relative head-room kept above epsilon so rounding in u + alpha w + s
# cannot push the excitation below the margin
_EPS_HEADROOM = 1e-6


@dataclass(frozen=True)
class CostModel:
    """Objective ``value(u, y)`` with its partial gradients (1-D arrays)."""

    value: Callable
    grad_u: Callable
    grad_y: Callable

    @classmethod
    def linear(cls, c_u, c_y) -> "CostModel":
        c_u = np.asarray(c_u, dtype=float)
        c_y = np.asarray(c_y, dtype=float)
        return cls(
            value=lambda u, y: float(c_u @ u + c_y @ y),
            grad_u=lambda u, y: c_u,
            grad_y=lambda u, y: c_y,
        )


@dataclass(frozen=True)
class ConstraintSpec:
    input_set: PolyhedralSet
    output_set: Optional[PolyhedralSet] = None


class ExcitationWindow:
    """The most recent ``n_u - 1`` applied input steps, oldest first."""

    def __init__(self, n_u: int, deltas=()):
        if n_u < 1:
            raise ValueError("n_u must be positive")
        self.n_u = n_u
        self.deltas = deque(maxlen=max(n_u - 1, 0))
        for d in deltas:
            self.push(d)

    def push(self, delta) -> None:
        delta = np.asarray(delta, dtype=float).ravel()
        if delta.size != self.n_u:
            raise ValueError(f"expected a step of length {self.n_u}, got {delta.size}")
        if self.deltas.maxlen:
            self.deltas.append(delta.copy())

    @property
    def full(self) -> bool:
        return len(self.deltas) == self.n_u - 1

    def matrix(self) -> np.ndarray:
        """Steps as columns, shape ``(n_u, k)``."""
        if not self.deltas:
            return np.zeros((self.n_u, 0))
        return np.column_stack(list(self.deltas))

    def __len__(self):
        return len(self.deltas)

    def copy(self) -> "ExcitationWindow":
        return ExcitationWindow(self.n_u, self.deltas)


@dataclass(frozen=True)
class PeParameters:
    alpha: float = 0.001
    epsilon: float = 1e-9
    gamma: float = 4.0
    s_lo: float = -0.005
    s_hi: float = 0.005
    sigma_noise: float = 5.0
    fp_max_iter: int = 20
    fp_tol: float = 1e-9

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not self.s_lo <= 0 <= self.s_hi:
            raise ValueError("perturbation bounds must bracket zero")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be nonnegative")


@dataclass
class PerturbationSolution:
    s: np.ndarray
    z_plus: float
    z_minus: float
    lam: np.ndarray
    mu: float
    objective: float
    # the QP that produced it, kept for certification
    problem: Optional[QpProblem] = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.s, [self.z_plus, self.z_minus]])

    def kkt_residual(self) -> float:
        from .qp import QpSolution

        sol = QpSolution(self.x, self.lam, np.array([self.mu]), QpStatus.OPTIMAL)
        return kkt_residual(self.problem, sol)


@dataclass
class PeStepInfo:
    iterations: int
    converged: bool
    fallback: bool = False
    # "fixed_point", "margin" or "free" (see solve_pe_step)
    branch: str = "fixed_point"


def descent_gradient(u, y, jac, cost: CostModel) -> np.ndarray:
    """Total derivative of the cost along ``u`` through the (estimated) plant."""
    jac = np.asarray(jac, dtype=float)
    return np.asarray(cost.grad_u(u, y), dtype=float) + jac.T @ np.asarray(cost.grad_y(u, y), dtype=float)


def _step_qp(target, spec: ConstraintSpec, jac, u, y, alpha, shift) -> QpProblem:
    """``min |w - target|^2`` s.t. ``u + alpha w + shift`` stays in the input set
    and the predicted output in the output set."""
    n = target.size
    A_u = spec.input_set.A
    A = [alpha * A_u]
    b = [spec.input_set.b - A_u @ (u + shift)]
    if spec.output_set is not None:
        A_y = spec.output_set.A
        A.append(alpha * A_y @ jac)
        b.append(spec.output_set.b - A_y @ (y + jac @ shift))
    return QpProblem(2.0 * np.eye(n), -2.0 * target, np.vstack(A), np.concatenate(b))


def _solve_step(problem: QpProblem, x0=None) -> np.ndarray:
    sol = solve_qp(problem, x0=x0)
    if sol.status != QpStatus.OPTIMAL:
        raise NumericalError(f"step QP returned {sol.status.value}")
    return sol.x


def project_step(grad, perturb, spec: ConstraintSpec, jac, u, y, alpha: float) -> np.ndarray:
    """Closest direction to ``-(grad + perturb)`` keeping the next input feasible."""
    grad = np.asarray(grad, dtype=float)
    u = np.asarray(u, dtype=float)
    target = -(grad + np.asarray(perturb, dtype=float))
    zero = np.zeros_like(u)
    problem = _step_qp(target, spec, jac, u, y, alpha, zero)
    return _solve_step(problem, x0=zero)


def gaussian_perturbation(rng: np.random.Generator, sigma: float, n_u: int) -> np.ndarray:
    return rng.normal(0.0, sigma, n_u)


def left_nullspace(window: ExcitationWindow):
    """Unit vector orthogonal to the window's steps.

    Returns ``(v_perp, degenerate)``; ``degenerate`` is set when the window
    is not full or its steps do not have full column rank, in which case
    ``v_perp`` is one of several valid directions.
    """
    n_u = window.n_u
    M = window.matrix()
    k = M.shape[1]
    if k == 0:
        v = np.zeros(n_u)
        v[-1] = 1.0
        return v, True
    U, sv, _ = np.linalg.svd(M, full_matrices=True)
    v = U[:, -1].copy()
    # fix the sign so results are reproducible across LAPACK builds
    i = int(np.argmax(np.abs(v)))
    if v[i] < 0:
        v = -v
    tol = max(M.shape) * np.finfo(float).eps * sv[0]
    rank = int(np.sum(sv > tol))
    return v, bool(rank < k or k < n_u - 1)


def excitation_check(window: ExcitationWindow, candidate, epsilon: float) -> bool:
    """Whether ``candidate`` leaves the span of the window by at least ``epsilon``."""
    v, degenerate = left_nullspace(window)
    if degenerate:
        return False
    return bool(abs(v @ np.asarray(candidate, dtype=float)) >= epsilon)


def _lower_problem(w, v_perp, grad, params: PeParameters) -> QpProblem:
    n = v_perp.size
    g = np.asarray(grad, dtype=float)
    H = np.zeros((n + 2, n + 2))
    H[:n, :n] = np.outer(g, g)
    c = np.concatenate([np.zeros(n), [params.gamma, params.gamma]])
    eps = params.epsilon * (1.0 + _EPS_HEADROOM)
    A = np.zeros((2 * n + 3, n + 2))
    A[:n, :n] = np.eye(n)
    A[n:2 * n, :n] = -np.eye(n)
    A[2 * n, n:] = -1.0
    A[2 * n + 1, n] = -1.0
    A[2 * n + 2, n + 1] = -1.0
    b = np.concatenate([np.full(n, params.s_hi), np.full(n, -params.s_lo), [-eps, 0.0, 0.0]])
    A_eq = np.concatenate([-v_perp, [1.0, -1.0]])[None, :]
    b_eq = np.array([params.alpha * (v_perp @ w)])
    return QpProblem(H, c, A, b, A_eq, b_eq)


def _lower_start(a: float, v_perp, params: PeParameters, branch=None) -> np.ndarray:
    """Feasible point with one of z+/z- at zero, on the side ``branch`` if given."""
    n = v_perp.size
    eps = params.epsilon * (1.0 + _EPS_HEADROOM)
    s = np.zeros(n)
    sign = branch if branch is not None else (1.0 if a >= 0 else -1.0)
    if abs(a) >= eps and np.sign(a) == sign:
        return np.concatenate([s, [max(a, 0.0), max(-a, 0.0)]])
    s = (sign * eps - a) * v_perp
    if np.all(s <= params.s_hi) and np.all(s >= params.s_lo):
        return np.concatenate([s, [eps, 0.0] if sign > 0 else [0.0, eps]])
    # the requested side is out of reach; start on the other one
    pad = 0.5 * max(eps - abs(a), 0.0)
    return np.concatenate([np.zeros(n), [max(a, 0.0) + pad, max(-a, 0.0) + pad]])


def solve_lower(w, v_perp, grad, params: PeParameters, branch=None) -> PerturbationSolution:
    """Smallest-impact perturbation keeping the step off the window's span.

    Solves::

        min  1/2 (grad^T s)^2 + gamma (z+ + z-)
        s.t. s_lo <= s <= s_hi,  z+ + z- >= epsilon,  z+, z- >= 0,
             z+ - z- = v_perp^T (alpha w + s)

    Several solutions can be optimal (the relaxation is flat between
    ``-epsilon`` and ``epsilon``); the one returned keeps ``z+ z- = 0`` and
    lies on the side of ``v_perp^T alpha w`` unless ``branch`` (+1 or -1)
    asks for the other side.
    """
    v_perp = np.asarray(v_perp, dtype=float)
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(v_perp) - 1.0) > 1e-12:
        raise ValueError("v_perp must be a unit vector")
    p = _lower_problem(w, v_perp, grad, params)
    x0 = _lower_start(params.alpha * (v_perp @ w), v_perp, params, branch)
    sol = solve_qp(p, x0=x0)
    if sol.status != QpStatus.OPTIMAL:
        raise NumericalError(f"perturbation QP returned {sol.status.value}")
    n = v_perp.size
    x = _complementary(sol.x, sol.lam, v_perp, grad, params, branch)
    # the solver meets bounds to rounding; clamp so they hold exactly
    x[:n] = np.clip(x[:n], params.s_lo, params.s_hi)
    x[n:] = np.maximum(x[n:], 0.0)
    return PerturbationSolution(
        s=x[:n],
        z_plus=float(x[n]),
        z_minus=float(x[n + 1]),
        lam=sol.lam,
        mu=float(sol.mu[0]),
        objective=p.objective(x),
        problem=p,
    )


def _complementary(x, lam, v_perp, grad, params, branch):
    """Move an optimum with z+ z- > 0 to one with a zero lifting variable.

    On the flat part of the optimal set, ``s`` can slide by ``q`` with
    ``grad^T q = 0`` while changing ``v_perp^T s``; bounds carrying a positive
    multiplier stay put, so objective and multipliers are unchanged.
    """
    n = v_perp.size
    s, zp, zm = x[:n], x[n], x[n + 1]
    if min(zp, zm) <= 0.0:
        return x.copy()
    d = zp - zm
    total = zp + zm
    first = branch if branch is not None else (1.0 if d >= 0 else -1.0)
    pinned = (lam[:n] > 1e-12) | (lam[n:2 * n] > 1e-12)
    A_eq = np.vstack([np.asarray(grad, dtype=float), v_perp, np.eye(n)[pinned]])
    A_ineq = np.vstack([np.eye(n), -np.eye(n)])
    b_ineq = np.concatenate([params.s_hi - s, s - params.s_lo])
    for sign in (first, -first):
        b_eq = np.concatenate([[0.0, sign * total - d], np.zeros(int(pinned.sum()))])
        q0 = np.linalg.lstsq(A_eq, b_eq, rcond=None)[0]
        sol = solve_qp(QpProblem(np.eye(n), np.zeros(n), A_ineq, b_ineq, A_eq, b_eq), x0=q0)
        if sol.status == QpStatus.OPTIMAL:
            z = [total, 0.0] if sign > 0 else [0.0, total]
            return np.concatenate([np.clip(s + sol.x, params.s_lo, params.s_hi), z])
    return x.copy()


def solve_pe_step(u, y, jac, cost: CostModel, spec: ConstraintSpec, window: ExcitationWindow,
                  params: PeParameters, grad=None):
    """Bilevel step: a projected descent step ``w`` plus an exciting perturbation ``s``.

    Two kinds of candidate are formed and the one with the smallest step
    objective ``|w + grad|^2`` is returned:

    * the fixed point of alternating the perturbation QP (given ``w``) and
      the step QP (given ``s``), started from the unperturbed projected step
      and stopped once the step QP reproduces ``w`` within ``fp_tol``;
    * for each sign, the best step whose perturbation is gradient-neutral
      (``grad^T s = 0``) and puts ``v_perp^T (alpha w + s)`` exactly on the
      margin. Such an ``s`` attains the perturbation QP's lower bound
      ``gamma epsilon``, so it is optimal for the perturbation QP at that
      ``w``; these candidates are the branches of the single-level problem
      that the alternation can miss.

    The perturbation QP sees ``w`` only through ``a = alpha v_perp^T w``.
    When the alternation stops contracting (an active input row turns a
    change in ``s`` into a ``1/alpha`` times larger change in ``w``) and no
    margin candidate exists, the scalar equation in ``a`` is solved directly.

    Returns ``(w, pert, info)``.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    jac = np.asarray(jac, dtype=float)
    if grad is None:
        grad = descent_gradient(u, y, jac, cost)
    grad = np.asarray(grad, dtype=float)
    v_perp, _ = left_nullspace(window)
    fp = _FixedPoint(u, y, jac, grad, spec, v_perp, params)

    candidates = []
    w = fp.w0
    history = []
    last = None
    for k in range(1, params.fp_max_iter + 1):
        pert = solve_lower(w, v_perp, grad, params)
        up = fp.upper(pert.s)
        if up is None:
            log.warning("step QP infeasible with the perturbation; dropping it")
            return fp.w0, _zero_perturbation(fp.w0, v_perp, grad, params), PeStepInfo(k, False, True)
        if np.linalg.norm(up - w) <= params.fp_tol:
            candidates.append((w, pert, PeStepInfo(k, True)))
            break
        last = (up, pert)
        history.append((fp.a(w), fp.a(up) - fp.a(w)))
        if len(history) >= 2 and abs(history[-1][1]) > 0.5 * abs(history[-2][1]):
            break
        w = up
    iterations = len(history) + (1 if candidates else 0)

    alternation_converged = bool(candidates)
    for sign in (1.0, -1.0):
        found = fp.margin_candidate(sign)
        if found is not None:
            candidates.append((found[0], found[1], PeStepInfo(iterations, True, branch="margin")))
        if not alternation_converged:
            # the unconstrained step's coupling value is a fixed point whenever s alone
            # restores feasibility, a case the alternation can circle around
            found = fp.accept(fp.a(-grad), sign)
            if found is not None:
                candidates.append((found[0], found[1], PeStepInfo(iterations, True, branch="free")))

    if not candidates:
        found = fp.solve_scalar(history)
        if found is not None:
            return found[0], found[1], PeStepInfo(iterations, True)
        w_new, pert = last
        log.warning("bilevel fixed point did not converge")
        return w_new, _relift(pert, w_new, v_perp, grad, params), PeStepInfo(iterations, False)

    # ties keep the earliest candidate, i.e. the plain fixed point
    scores = [float(np.sum((c[0] + grad) ** 2)) for c in candidates]
    best = int(np.argmin(scores))
    return candidates[best]


class _FixedPoint:
    """Upper/lower coupling of the bilevel step, parameterized by ``a = alpha v_perp^T w``."""

    def __init__(self, u, y, jac, grad, spec, v_perp, params):
        self.u, self.y, self.jac, self.grad = u, y, jac, grad
        self.spec, self.v_perp, self.params = spec, v_perp, params
        self.w0 = _solve_step(self._problem(np.zeros_like(u)), x0=np.zeros_like(u))
        self._cache = {}

    def _problem(self, shift):
        return _step_qp(-self.grad, self.spec, self.jac, self.u, self.y, self.params.alpha, shift)

    def a(self, w) -> float:
        return float(self.params.alpha * (self.v_perp @ w))

    def upper(self, shift):
        # w0 - shift / alpha reaches the same next input as w0, so it is feasible
        sol = solve_qp(self._problem(shift), x0=self.w0 - shift / self.params.alpha)
        return sol.x if sol.status == QpStatus.OPTIMAL else None

    def _evaluate(self, a, branch):
        key = (a, branch)
        if key not in self._cache:
            pert = solve_lower(a / self.params.alpha * self.v_perp, self.v_perp, self.grad, self.params, branch)
            w = self.upper(pert.s)
            if w is None:
                raise NumericalError("step QP infeasible")
            self._cache[key] = (pert, w)
        return self._cache[key]

    def gap(self, a, branch):
        return self.a(self._evaluate(a, branch)[1]) - a

    def accept(self, a, branch):
        alpha = self.params.alpha
        pert, w = self._evaluate(a, branch)
        if abs(self.a(w) - a) > alpha * self.params.fp_tol:
            return None
        # w matches a up to fp_tol: shift the lifting variables onto w's own problem,
        # re-solving only if that breaks complementarity
        pert = _relift(pert, w, self.v_perp, self.grad, self.params)
        if min(pert.z_plus, pert.z_minus) > 0.0:
            pert = solve_lower(w, self.v_perp, self.grad, self.params, branch)
        if self.spec.input_set.violation(self.u + alpha * w + pert.s) > 1e-10:
            return None
        return w, pert

    def margin_candidate(self, sign):
        """Best ``(w, s)`` with ``grad^T s = 0`` and ``v_perp^T (alpha w + s) = sign * epsilon``."""
        n = self.u.size
        alpha = self.params.alpha
        eps = self.params.epsilon * (1.0 + _EPS_HEADROOM)
        H = np.zeros((2 * n, 2 * n))
        H[:n, :n] = 2.0 * np.eye(n)
        g = np.concatenate([2.0 * self.grad, np.zeros(n)])
        A_u = self.spec.input_set.A
        rows = [np.hstack([alpha * A_u, A_u])]
        rhs = [self.spec.input_set.b - A_u @ self.u]
        if self.spec.output_set is not None:
            A_y = self.spec.output_set.A @ self.jac
            rows.append(np.hstack([alpha * A_y, A_y]))
            rhs.append(self.spec.output_set.b - self.spec.output_set.A @ self.y)
        eye = np.eye(n)
        rows += [np.hstack([np.zeros((n, n)), eye]), np.hstack([np.zeros((n, n)), -eye])]
        rhs += [np.full(n, self.params.s_hi), np.full(n, -self.params.s_lo)]
        A_eq = np.vstack([np.concatenate([np.zeros(n), self.grad]),
                          np.concatenate([alpha * self.v_perp, self.v_perp])])
        b_eq = np.array([0.0, sign * eps])
        sol = solve_qp(QpProblem(H, g, np.vstack(rows), np.concatenate(rhs), A_eq, b_eq))
        if sol.status != QpStatus.OPTIMAL:
            return None
        w, s = sol.x[:n], sol.x[n:]
        if self.spec.input_set.violation(self.u + alpha * w + s) > 1e-10:
            return None
        # the objective is at least gamma (z+ + z-) >= gamma eps, attained here; only the
        # z+ + z- >= eps row carries a multiplier (gamma) and mu = 0
        problem = _lower_problem(w, self.v_perp, self.grad, self.params)
        z = [eps, 0.0] if sign > 0 else [0.0, eps]
        x = np.concatenate([s, z])
        lam = np.zeros(2 * n + 3)
        lam[2 * n] = self.params.gamma
        pert = PerturbationSolution(s, z[0], z[1], lam, 0.0, problem.objective(x), problem)
        if pert.kkt_residual() > 1e-6:
            return None
        return w, pert

    def solve_scalar(self, history):
        """Roots on both sign branches; keeps the one best for the step QP objective."""
        a0 = history[-1][0] if history else self.a(self.w0)
        best = None
        for branch in (1.0, -1.0):
            try:
                found = self._solve_branch(a0, branch)
            except NumericalError:
                found = None
            if found is None:
                continue
            score = float(np.sum((found[0] + self.grad) ** 2))
            if best is None or score < best[0]:
                best = (score, found)
        return None if best is None else best[1]

    def _solve_branch(self, a0, branch):
        tol = self.params.alpha * self.params.fp_tol
        # gap is piecewise linear in a, so secant steps usually land on the root
        pts = [(a0, self.gap(a0, branch))]
        a1 = a0 + pts[0][1]
        pts.append((a1, self.gap(a1, branch)))
        for _ in range(8):
            (x0, g0), (x1, g1) = pts[-2], pts[-1]
            if abs(g1) <= tol:
                found = self.accept(x1, branch)
                if found is not None:
                    return found
            if g1 == g0:
                break
            x2 = x1 - g1 * (x1 - x0) / (g1 - g0)
            pts.append((x2, self.gap(x2, branch)))
        return self._bracketed(a0, pts[0][1], branch)

    def _bracketed(self, a0, g0, branch):
        """Bracket a sign change of ``gap`` starting from ``a0``, then refine it."""
        if g0 == 0.0:
            return self.accept(a0, branch)
        h = max(abs(g0), 1e-3 * self.params.alpha)
        lo, g_lo = a0, g0
        hi = a0 + np.sign(g0) * h
        g_hi = self.gap(hi, branch)
        for _ in range(40):
            if np.sign(g_hi) != np.sign(g_lo):
                break
            h *= 4.0
            lo, g_lo = hi, g_hi
            hi = a0 + np.sign(g0) * h
            g_hi = self.gap(hi, branch)
        else:
            return None
        a = self._refine([(lo, g_lo)], [(hi, g_hi)], branch)
        return None if a is None else self.accept(a, branch)

    def _refine(self, side_a, side_b, branch):
        """Shrink a sign-change bracket of the piecewise linear ``gap``.

        Each side keeps its evaluated points, nearest to the root last. A
        line through the last two points of a side is exact when both lie on
        the piece holding the root; bisection covers the other cases. Returns
        ``None`` if the sign change is a jump rather than a root.
        """
        tol = self.params.alpha * self.params.fp_tol
        for _ in range(100):
            (xa, ga), (xb, gb) = side_a[-1], side_b[-1]
            for x, g in (side_a[-1], side_b[-1]):
                if abs(g) <= tol:
                    return x
            if abs(xb - xa) <= tol:
                return None
            lo, hi = min(xa, xb), max(xa, xb)
            trial = None
            for side in (side_a, side_b):
                if len(side) >= 2:
                    (x1, g1), (x2, g2) = side[-2], side[-1]
                    if g1 != g2:
                        t = x2 - g2 * (x2 - x1) / (g2 - g1)
                        if lo < t < hi:
                            trial = t
                            break
            if trial is None:
                # regula falsi between the sides, guarded toward the middle
                t = xa - ga * (xb - xa) / (gb - ga)
                mid = 0.5 * (xa + xb)
                trial = t if abs(t - mid) < 0.4 * (hi - lo) else mid
            g = self.gap(trial, branch)
            if np.sign(g) == np.sign(ga):
                side_a.append((trial, g))
            else:
                side_b.append((trial, g))
        return None


def _relift(pert: PerturbationSolution, w, v_perp, grad, params) -> PerturbationSolution:
    a = float(v_perp @ (params.alpha * w + pert.s))
    zp, zm = max(a, 0.0), max(-a, 0.0)
    pad = max(0.0, params.epsilon - abs(a)) / 2
    p = _lower_problem(w, v_perp, grad, params)
    obj = 0.5 * float(grad @ pert.s) ** 2 + params.gamma * (zp + zm + 2 * pad)
    return PerturbationSolution(pert.s, zp + pad, zm + pad, pert.lam, pert.mu, obj, p)


def _zero_perturbation(w, v_perp, grad, params) -> PerturbationSolution:
    n = v_perp.size
    zero = PerturbationSolution(np.zeros(n), 0.0, 0.0, np.zeros(2 * n + 3), 0.0, 0.0)
    return _relift(zero, w, v_perp, grad, params)


@dataclass
class StepRecord:
    """What the controller decided at one step."""

    u: np.ndarray
    y: np.ndarray
    cost: float
    s: np.ndarray
    excitation: float
    excited: bool
    warmup: bool
    jac: np.ndarray
    fp_iterations: int = 0
    converged: bool = True


class OfoController:
    """Closed-loop OFO controller holding its estimator, window and RNG.

    Parameters
    ----------
    variant : {"plain", "gaussian", "pe", "oracle"}
    cost : CostModel
    spec : ConstraintSpec
        Current constraints; ``step`` accepts a replacement input set.
    params : PeParameters
    u0 : array
        Initial input, must be feasible.
    estimate : SensitivityEstimate, optional
        Initial Jacobian estimate (ones, identity covariance by default).
        Unused by the oracle variant.
    noise : NoiseModel, optional
    true_jacobian : callable, optional
        ``u -> dh/du``; required by the oracle variant.
    rng : numpy Generator, optional
        Source of the Gaussian perturbations.
    """

    def __init__(self, variant: str, cost: CostModel, spec: ConstraintSpec, params: PeParameters,
                 u0, n_y: int, estimate: Optional[est.SensitivityEstimate] = None,
                 noise: Optional[est.NoiseModel] = None, true_jacobian: Optional[Callable] = None,
                 rng: Optional[np.random.Generator] = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if variant == "oracle" and true_jacobian is None:
            raise ValueError("the oracle variant needs true_jacobian")
        self.variant = variant
        self.cost = cost
        self.spec = spec
        self.params = params
        self.u = np.asarray(u0, dtype=float).copy()
        self.n_u = self.u.size
        self.n_y = n_y
        self.estimate = estimate or est.SensitivityEstimate.initial(self.n_u, n_y)
        self.noise = noise or est.NoiseModel()
        self.true_jacobian = true_jacobian
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.window = ExcitationWindow(self.n_u)
        self.t = 0
        self._prev = None
        if not spec.input_set.contains(self.u):
            raise ValueError("initial input is infeasible")

    def current_jacobian(self) -> np.ndarray:
        if self.variant == "oracle":
            return np.asarray(self.true_jacobian(self.u), dtype=float)
        return est.jacobian(self.estimate)

    def step(self, y_meas, input_set: Optional[PolyhedralSet] = None):
        """Consume the measurement at the current input and return ``(u_next, record)``."""
        try:
            return self._step(np.asarray(y_meas, dtype=float), input_set)
        except NumericalError as exc:
            if exc.step is None:
                raise NumericalError(str(exc), step=self.t) from exc
            raise

    def _step(self, y, input_set):
        if input_set is not None:
            self.spec = ConstraintSpec(input_set, self.spec.output_set)
        # a tightened cap can leave u outside the set; the step QP restores feasibility
        u = self.u
        if self._prev is not None and self.variant != "oracle":
            du, dy = u - self._prev[0], y - self._prev[1]
            try:
                self.estimate = est.update(self.estimate, self.noise, du, dy)
            except NumericalError:
                log.warning("step %d: singular estimator update skipped", self.t)

        jac = self.current_jacobian()
        grad = descent_gradient(u, y, jac, self.cost)
        p = self.params
        n = self.n_u
        iters, converged = 0, True
        if self.variant in ("plain", "oracle"):
            w = project_step(grad, np.zeros(n), self.spec, jac, u, y, p.alpha)
            s = np.zeros(n)
            recorded = s
        elif self.variant == "gaussian":
            draw = gaussian_perturbation(self.rng, p.sigma_noise, n)
            w = project_step(grad, draw, self.spec, jac, u, y, p.alpha)
            s = np.zeros(n)
            recorded = draw
        else:
            w, pert, info = solve_pe_step(u, y, jac, self.cost, self.spec, self.window, p, grad=grad)
            s = pert.s
            recorded = s
            iters, converged = info.iterations, info.converged

        delta = p.alpha * w + s
        v_perp, degenerate = left_nullspace(self.window)
        excitation = float(abs(v_perp @ delta))
        # same test as excitation_check, reusing the null-space vector
        excited = not degenerate and excitation >= p.epsilon
        warmup = not self.window.full
        if degenerate and not warmup:
            log.info("step %d: excitation window is rank deficient", self.t)

        u_next = u + delta
        if self.spec.input_set.violation(u_next) > 1e-9:
            raise NumericalError(
                f"next input violates the input set by {self.spec.input_set.violation(u_next):.3g}",
                step=self.t,
            )
        record = StepRecord(u.copy(), y.copy(), float(self.cost.value(u, y)), np.array(recorded),
                            excitation, excited, warmup, jac, iters, converged)
        self.window.push(delta)
        self._prev = (u.copy(), y.copy())
        self.u = u_next
        self.t += 1
        return u_next.copy(), record
