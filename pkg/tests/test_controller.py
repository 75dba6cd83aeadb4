import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peofo import controller as C
from peofo import plant
from peofo.sets import PolyhedralSet

FIELD = plant.FieldModel()
GAS_COST = C.CostModel.linear(plant.input_prices(FIELD), plant.output_prices(FIELD))


def _cost_of_input(u):
    return plant.profit(FIELD, u, plant.evaluate(FIELD, u))


def _window(cols, n_u):
    return C.ExcitationWindow(n_u, [np.asarray(c, dtype=float) for c in cols])


# descent_gradient


def test_gradient_without_sensitivity():
    g = C.descent_gradient(np.zeros(8), np.zeros(12), np.zeros((12, 8)), GAS_COST)
    np.testing.assert_array_equal(g, plant.input_prices(FIELD))


def test_gradient_chain_rule_on_linear_plant():
    G = np.arange(6.0).reshape(2, 3)
    c = np.array([1.0, -2.0])
    cost = C.CostModel.linear(np.zeros(3), c)
    np.testing.assert_allclose(C.descent_gradient(np.zeros(3), np.zeros(2), G, cost), G.T @ c)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(100):
        u = rng.uniform(h, 1 - h, 8)
        g = C.descent_gradient(u, plant.evaluate(FIELD, u), plant.analytic_jacobian(FIELD, u), GAS_COST)
        fd = np.array([(_cost_of_input(u + h * e) - _cost_of_input(u - h * e)) / (2 * h) for e in np.eye(8)])
        assert np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-3)) <= 1e-5


# project_step

BOX = PolyhedralSet.box(np.zeros(3), np.ones(3))


def test_interior_step_is_negative_gradient():
    grad = np.array([0.2, -0.4, 0.1])
    w = C.project_step(grad, np.zeros(3), C.ConstraintSpec(BOX), np.zeros((1, 3)), np.full(3, 0.5), np.zeros(1), 0.1)
    np.testing.assert_array_equal(w, -grad)


def test_perturbation_cancels_gradient():
    grad = np.array([0.2, -0.4, 0.1])
    w = C.project_step(grad, -grad, C.ConstraintSpec(BOX), np.zeros((1, 3)), np.full(3, 0.5), np.zeros(1), 0.1)
    np.testing.assert_allclose(w, 0.0, atol=1e-15)


def test_step_on_the_cap_has_no_outward_component():
    S = plant.availability_constraints(1.0, 2)
    u = np.array([0.5, 0.5, 0.5, 0.5])  # sum of q_inj equals the cap
    grad = np.array([-1.0, -0.2, -0.5, 0.3])
    w = C.project_step(grad, np.zeros(4), C.ConstraintSpec(S), np.zeros((1, 4)), u, np.zeros(1), 0.01)
    normal = np.array([1.0, 0.0, 1.0, 0.0])
    assert normal @ w == pytest.approx(0.0, abs=1e-12)
    assert S.contains(u + 0.01 * w)


def test_output_constraints_are_linearized():
    # y = u1 + u2 must stay below 1 at the predicted next output
    Y = PolyhedralSet(np.array([[1.0]]), np.array([1.0]))
    jac = np.array([[1.0, 1.0]])
    spec = C.ConstraintSpec(PolyhedralSet.box(np.zeros(2), np.ones(2)), Y)
    u = np.array([0.45, 0.45])
    w = C.project_step(np.array([-1.0, -1.0]), np.zeros(2), spec, jac, u, jac @ u, 0.5)
    assert (jac @ u + 0.5 * jac @ w)[0] <= 1.0 + 1e-12


# gaussian_perturbation


def test_gaussian_zero_sigma():
    np.testing.assert_array_equal(C.gaussian_perturbation(np.random.default_rng(0), 0.0, 5), np.zeros(5))


def test_gaussian_moments():
    rng = np.random.default_rng(1)
    draws = np.array([C.gaussian_perturbation(rng, 5.0, 3) for _ in range(100_000)])
    assert np.all(np.abs(draws.mean(axis=0)) <= 3 * 5.0 / np.sqrt(1e5))
    assert np.all(np.abs(draws.std(axis=0) / 5.0 - 1) <= 0.02)


def test_gaussian_reproducible():
    a = C.gaussian_perturbation(np.random.default_rng(7), 1.0, 4)
    b = C.gaussian_perturbation(np.random.default_rng(7), 1.0, 4)
    np.testing.assert_array_equal(a, b)


# left_nullspace / excitation_check


def test_nullspace_of_standard_basis():
    v, degenerate = C.left_nullspace(_window(np.eye(8)[:7], 8))
    assert not degenerate
    np.testing.assert_allclose(np.abs(v), np.eye(8)[7], atol=1e-15)


def test_repeated_column_is_degenerate():
    v, degenerate = C.left_nullspace(_window([[1, 0, 0], [1, 0, 0]], 3))
    assert degenerate
    assert abs(v[0]) <= 1e-15
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_empty_window_returns_basis_vector():
    v, degenerate = C.left_nullspace(C.ExcitationWindow(4))
    assert degenerate
    assert sorted(np.abs(v)) == [0, 0, 0, 1]


def test_window_evicts_oldest():
    win = C.ExcitationWindow(3)
    for k in range(4):
        win.push(np.full(3, float(k)))
    assert len(win) == 2
    np.testing.assert_array_equal(win.matrix()[:, 0], np.full(3, 2.0))
    with pytest.raises(ValueError):
        win.push(np.zeros(2))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_nullspace_orthogonal_to_window(seed):
    rng = np.random.default_rng(seed)
    cols = rng.normal(size=(7, 8)) * rng.uniform(1e-4, 1, (7, 1))
    v, degenerate = C.left_nullspace(_window(cols, 8))
    assert not degenerate
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)
    for c in cols:
        assert abs(v @ c) <= 1e-10 * np.linalg.norm(c)


def test_excitation_check_cases():
    win = _window(np.eye(8)[:7] * 0.3, 8)
    assert C.excitation_check(win, np.eye(8)[7] * 1e-3, 1e-9)
    assert not C.excitation_check(win, np.eye(8)[:7].sum(axis=0), 1e-9)
    v, _ = C.left_nullspace(win)
    assert C.excitation_check(win, 1e-9 * v, 1e-9)
    assert not C.excitation_check(_window([[1, 0, 0]], 3), np.ones(3), 1e-9)


# solve_lower

PARAMS = C.PeParameters()


def _check_perturbation(pert, w, v, params, tol=1e-9):
    assert np.all(pert.s >= params.s_lo - 1e-15) and np.all(pert.s <= params.s_hi + 1e-15)
    assert pert.z_plus >= 0 and pert.z_minus >= 0
    assert pert.z_plus + pert.z_minus >= params.epsilon - 1e-12
    assert pert.z_plus - pert.z_minus == pytest.approx(v @ (params.alpha * w + pert.s), abs=tol)
    assert pert.kkt_residual() <= 1e-8


def test_pinned_perturbation():
    params = dataclasses.replace(PARAMS, s_lo=0.0, s_hi=0.0)
    v = np.array([0.6, 0.8])
    for w in (np.array([1.0, -2.0]), np.zeros(2)):
        pert = C.solve_lower(w, v, np.array([1.0, 1.0]), params)
        np.testing.assert_array_equal(pert.s, 0.0)
        eps = params.epsilon * (1 + 1e-6)
        assert pert.z_plus + pert.z_minus == pytest.approx(max(abs(v @ (params.alpha * w)), eps), rel=1e-12)


def test_gradient_orthogonal_to_nullspace_vector():
    v = np.array([0.0, 1.0, 0.0])
    grad = np.array([1.0, 0.0, 2.0])
    pert = C.solve_lower(np.array([0.3, 0.0, -0.1]), v, grad, PARAMS)
    eps = PARAMS.epsilon * (1 + 1e-6)
    assert pert.objective == pytest.approx(PARAMS.gamma * eps, rel=1e-9)
    assert abs(v @ pert.s) == pytest.approx(eps, rel=1e-9)
    assert grad @ pert.s == pytest.approx(0.0, abs=1e-15)
    assert min(pert.z_plus, pert.z_minus) == 0.0


def test_unit_vector_required():
    with pytest.raises(ValueError):
        C.solve_lower(np.zeros(2), np.array([1.0, 1.0]), np.ones(2), PARAMS)


def _lower_value(s, a, v, grad, params):
    eps = params.epsilon * (1 + 1e-6)
    return 0.5 * (s @ grad) ** 2 + params.gamma * np.maximum(eps, np.abs(a + s @ v))


def test_lower_matches_grid_search():
    rng = np.random.default_rng(12)
    axis = np.arange(-50, 51) * 1e-4
    S = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    for _ in range(5):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        grad = rng.normal(size=3)
        w = rng.normal(size=3) * 3
        a = PARAMS.alpha * v @ w
        pert = C.solve_lower(w, v, grad, PARAMS)
        _check_perturbation(pert, w, v, PARAMS)
        grid = _lower_value(S, a, v, grad, PARAMS).min()
        # Lipschitz bound of the reduced objective over half a grid diagonal
        lip = np.linalg.norm(grad) * abs(grad).sum() * 0.005 + PARAMS.gamma
        assert pert.objective <= grid + 1e-15
        assert grid - pert.objective <= lip * np.sqrt(3) * 0.5e-4


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_lower_certificates(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    w = rng.normal(size=n) * 10 ** rng.uniform(-7, 1)
    grad = rng.normal(size=n)
    branch = rng.choice([None, 1.0, -1.0])
    pert = C.solve_lower(w, v, grad, PARAMS, branch)
    _check_perturbation(pert, w, v, PARAMS)


# solve_pe_step


def _pe_problem(u, grad, cap=10.0):
    n = u.size
    S = PolyhedralSet(np.vstack([np.ones(n), np.eye(n), -np.eye(n)]),
                      np.concatenate([[cap], np.ones(n), np.zeros(n)]))
    cost = C.CostModel(lambda u, y: 0.0, lambda u, y: grad, lambda u, y: np.zeros(1))
    return C.ConstraintSpec(S), cost


def test_zero_gradient_interior():
    u = np.array([0.4, 0.5, 0.3])
    spec, cost = _pe_problem(u, np.zeros(3))
    win = _window([[1.0, 0, 0], [0, 1.0, 0]], 3)
    w, pert, info = C.solve_pe_step(u, np.zeros(1), np.zeros((1, 3)), cost, spec, win, PARAMS, grad=np.zeros(3))
    np.testing.assert_allclose(w, 0.0, atol=1e-15)
    assert info.converged
    np.testing.assert_allclose(np.abs(pert.s), np.array([0, 0, 1.0]) * PARAMS.epsilon * (1 + 1e-6), rtol=1e-9)
    assert pert.z_plus + pert.z_minus == pytest.approx(PARAMS.epsilon * (1 + 1e-6), rel=1e-12)


def test_vanishing_relaxation_reduces_to_plain_step():
    params = dataclasses.replace(PARAMS, epsilon=1e-15, gamma=0.0)
    u = np.array([0.4, 0.5, 0.3])
    grad = np.array([0.3, -0.7, 0.2])
    spec, cost = _pe_problem(u, grad)
    win = _window([[1.0, 0.2, 0], [0, 1.0, 0.5]], 3)
    w, pert, _ = C.solve_pe_step(u, np.zeros(1), np.zeros((1, 3)), cost, spec, win, params, grad=grad)
    plain = C.project_step(grad, np.zeros(3), spec, np.zeros((1, 3)), u, np.zeros(1), params.alpha)
    assert np.linalg.norm(pert.s) <= 1e-12
    np.testing.assert_allclose(w, plain, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pe_step_contract(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    u = rng.uniform(0, 1, n)
    if rng.random() < 0.5:
        u[rng.integers(n)] = rng.choice([0.0, 1.0])
    grad = rng.normal(size=n)
    spec, cost = _pe_problem(u, grad, cap=float(u.sum()) + rng.choice([0.0, 0.1]))
    win = _window(rng.normal(size=(n - 1, n)) * 0.01, n)
    v, _ = C.left_nullspace(win)
    w, pert, info = C.solve_pe_step(u, np.zeros(1), np.zeros((1, n)), cost, spec, win, PARAMS, grad=grad)
    assert spec.input_set.violation(u + PARAMS.alpha * w + pert.s) <= 1e-9
    if info.converged:
        _check_perturbation(pert, w, v, PARAMS)
    if info.converged and info.branch == "fixed_point":
        # w is optimal for the step QP given s
        again = C.project_step(grad, np.zeros(n), C.ConstraintSpec(
            PolyhedralSet(spec.input_set.A, spec.input_set.b - spec.input_set.A @ pert.s)),
            np.zeros((1, n)), u, np.zeros(1), PARAMS.alpha)
        assert np.sum((w + grad) ** 2) <= np.sum((again + grad) ** 2) + 1e-9


# controller_step


def _controller(variant, sigma=5.0, seed=0, u0=None):
    params = dataclasses.replace(PARAMS, sigma_noise=sigma)
    spec = C.ConstraintSpec(plant.availability_constraints(2.0, 4))
    u0 = np.tile([0.1, 0.5], 4) if u0 is None else u0
    return C.OfoController(variant, GAS_COST, spec, params, u0, 12,
                           true_jacobian=lambda u: plant.analytic_jacobian(FIELD, u),
                           rng=np.random.default_rng(seed))


def _drive(ctl, steps, caps=None):
    records = []
    for t in range(steps):
        y = plant.evaluate(FIELD, ctl.u)
        cap = None if caps is None else plant.availability_constraints(caps(t), 4)
        u_next, rec = ctl.step(y, cap)
        records.append((u_next, rec))
    return records


def test_first_plain_step_is_a_gradient_step():
    ctl = _controller("plain")
    u0 = ctl.u.copy()
    y = plant.evaluate(FIELD, u0)
    grad = C.descent_gradient(u0, y, np.ones((12, 8)), GAS_COST)
    u1, _ = ctl.step(y)
    np.testing.assert_array_equal(u1, u0 - PARAMS.alpha * grad)


def test_zero_sigma_gaussian_matches_plain():
    a = _drive(_controller("gaussian", sigma=0.0), 30)
    b = _drive(_controller("plain", sigma=0.0), 30)
    for (ua, _), (ub, _) in zip(a, b):
        np.testing.assert_array_equal(ua, ub)


@pytest.mark.parametrize("variant", C.VARIANTS)
def test_every_emitted_input_is_feasible(variant):
    caps = [2.0, 1.0, 2.5]
    ctl = _controller(variant)
    for t in range(60):
        rows = plant.availability_constraints(caps[t // 20], 4)
        u_next, _ = ctl.step(plant.evaluate(FIELD, ctl.u), rows)
        assert rows.violation(u_next) <= 1e-9


def test_pe_steps_are_certified_and_exciting():
    ctl = _controller("pe")
    for t in range(60):
        window = ctl.window.copy()
        u, y = ctl.u.copy(), plant.evaluate(FIELD, ctl.u)
        u_next, rec = ctl.step(y)
        v, _ = C.left_nullspace(window)
        assert abs(v @ (u_next - u)) >= PARAMS.epsilon
        assert np.all(rec.s >= PARAMS.s_lo) and np.all(rec.s <= PARAMS.s_hi)
        if not rec.warmup:
            assert rec.excited


def _plain_fixed_point(cap=2.0, alpha=0.05, steps=3000):
    spec = C.ConstraintSpec(plant.availability_constraints(cap, 4))
    u = np.tile([0.1, 0.5], 4)
    for _ in range(steps):
        y = plant.evaluate(FIELD, u)
        grad = C.descent_gradient(u, y, plant.analytic_jacobian(FIELD, u), GAS_COST)
        u = np.clip(u + alpha * C.project_step(grad, np.zeros(8), spec, np.zeros((12, 8)), u, y, alpha), 0, 1)
    return u


def test_pe_keeps_moving_at_a_plain_fixed_point():
    u_star = _plain_fixed_point()
    y = plant.evaluate(FIELD, u_star)
    grad = C.descent_gradient(u_star, y, plant.analytic_jacobian(FIELD, u_star), GAS_COST)
    spec = C.ConstraintSpec(plant.availability_constraints(2.0, 4))
    assert np.linalg.norm(C.project_step(grad, np.zeros(8), spec, np.zeros((12, 8)), u_star, y, 1e-3)) <= 1e-6
    pe = _controller("pe", u0=u_star)
    for _ in range(10):
        u = pe.u.copy()
        u_next, rec = pe.step(plant.evaluate(FIELD, u))
        w = (u_next - u - rec.s) / PARAMS.alpha
        step = np.linalg.norm(u_next - u)
        assert step <= PARAMS.alpha * np.linalg.norm(w) + PARAMS.s_hi * np.sqrt(8) + 1e-15
        assert step >= PARAMS.epsilon


def test_unknown_variant_and_infeasible_start():
    with pytest.raises(ValueError):
        _controller("newton")
    with pytest.raises(ValueError):
        _controller("plain", u0=np.ones(8))
    with pytest.raises(ValueError):
        C.OfoController("oracle", GAS_COST, C.ConstraintSpec(plant.availability_constraints(2.0, 4)), PARAMS,
                        np.zeros(8), 12)


def test_parameter_validation():
    for bad in (dict(alpha=0.0), dict(epsilon=0.0), dict(gamma=-1.0), dict(s_lo=0.1), dict(sigma_noise=-1.0)):
        with pytest.raises(ValueError):
            dataclasses.replace(PARAMS, **bad)
