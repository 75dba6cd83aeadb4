"""
Anatomy of one persistently exciting step
=========================================

Two inputs under a shared cap. The last applied step spans one direction, so
the estimator learns nothing new along the orthogonal one unless the next
step has a component there. The plain step and the pe step are compared.
"""

# %%
import numpy as np

from peofo import controller as C
from peofo.sets import PolyhedralSet

params = C.PeParameters()
inputs = PolyhedralSet(np.vstack([[1.0, 1.0], np.eye(2), -np.eye(2)]), np.array([1.0, 1, 1, 0, 0]))
spec = C.ConstraintSpec(inputs)
u = np.array([0.4, 0.6])  # on the cap
grad = np.array([-1.0, -1.0])  # both inputs want to grow

# %% the previous step moved along (1, 1); the unexplored direction is its null space
window = C.ExcitationWindow(2, [np.array([1e-3, 1e-3])])
v_perp, _ = C.left_nullspace(window)
print("unexplored direction:", v_perp)

# %% the plain step is blocked by the cap and leaves that direction untouched
w_plain = C.project_step(grad, np.zeros(2), spec, np.zeros((1, 2)), u, np.zeros(1), params.alpha)
print("plain step:", params.alpha * w_plain, " |v^T du| =", abs(v_perp @ (params.alpha * w_plain)))

# %% the pe step adds the smallest perturbation that restores excitation
cost = C.CostModel(lambda u, y: 0.0, lambda u, y: grad, lambda u, y: np.zeros(1))
w, pert, info = C.solve_pe_step(u, np.zeros(1), np.zeros((1, 2)), cost, spec, window, params, grad=grad)
du = params.alpha * w + pert.s
print(f"pe step: {du}  |v^T du| = {abs(v_perp @ du):.3e} (margin {params.epsilon:.0e})")
print(f"perturbation s = {pert.s}, found by the {info.branch} route after {info.iterations} iterations")
print("still feasible:", inputs.contains(u + du))
