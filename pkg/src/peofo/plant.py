"""
Steady-state gas-lift well field.

Each well maps its input ``(q_inj, v)`` (injected gas lift and choke
opening, both normalized to [0, 1]) to produced oil through a gas lift
performance curve::

    q_o = (a log10(1 + b q_inj) - c q_inj^2 + d v) / norm

Water and gas are fixed fractions of the oil rate. Inputs and outputs are
stacked well by well: ``u = [q_inj^1, v^1, q_inj^2, v^2, ...]`` and
``y = [q_o^1, q_w^1, q_g^1, q_o^2, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .sets import PolyhedralSet

_LN10 = np.log(10.0)
CAP_LABEL = "gas_lift_cap"


@dataclass(frozen=True)
class WellModel:
    a: float
    b: float
    c: float
    d: float
    norm: float = 34.5
    r_g: float = 0.1
    r_w: float = 0.2

    def __post_init__(self):
        if self.norm <= 0:
            raise ValueError("norm must be positive")
        if self.r_g < 0 or self.r_w < 0:
            raise ValueError("output ratios must be nonnegative")

    def oil(self, q_inj: float, v: float) -> float:
        # log1p keeps the curve accurate (and nonnegative) for tiny injection rates
        return (self.a * np.log1p(self.b * q_inj) / _LN10 - self.c * q_inj**2 + self.d * v) / self.norm

    def oil_gradient(self, q_inj: float) -> tuple[float, float]:
        """(d q_o / d q_inj, d q_o / d v)."""
        dq = (self.a * self.b / ((1.0 + self.b * q_inj) * _LN10) - 2.0 * self.c * q_inj) / self.norm
        return dq, self.d / self.norm


@dataclass(frozen=True)
class PriceModel:
    p_o: float = 5.0
    p_g: float = 1.0
    p_w: float = 0.3
    p_inj: float = 0.7

    def __post_init__(self):
        if min(self.p_o, self.p_g, self.p_w, self.p_inj) < 0:
            raise ValueError("prices must be nonnegative")


DEFAULT_WELLS = (
    WellModel(5.0, 25.0, 0.05, 2.0, r_g=0.1, r_w=0.3),
    WellModel(6.0, 35.0, 0.15, 3.0, r_g=0.12, r_w=0.12),
    WellModel(5.0, 20.0, 0.025, 1.0, r_g=0.1, r_w=0.2),
    WellModel(10.0, 40.0, 0.175, 5.0, r_g=0.1, r_w=0.2),
)


@dataclass(frozen=True)
class FieldModel:
    wells: tuple = DEFAULT_WELLS
    prices: PriceModel = field(default_factory=PriceModel)
    # Standard deviation of additive output noise; 0 disables it.
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "wells", tuple(self.wells))
        if len(self.wells) < 1:
            raise ValueError("a field needs at least one well")

    @property
    def n_wells(self) -> int:
        return len(self.wells)

    @property
    def n_u(self) -> int:
        return 2 * len(self.wells)

    @property
    def n_y(self) -> int:
        return 3 * len(self.wells)


def _check_input(field_: FieldModel, u) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if u.size != field_.n_u:
        raise ValueError(f"expected {field_.n_u} inputs, got {u.size}")
    if np.any(u < -1e-9) or np.any(u > 1.0 + 1e-9):
        raise DomainError(f"inputs must lie in [0, 1], got range [{u.min():.3g}, {u.max():.3g}]")
    return u


def evaluate(field_: FieldModel, u, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Stacked steady-state outputs (oil, water, gas per well)."""
    u = _check_input(field_, u)
    y = np.empty(field_.n_y)
    for i, well in enumerate(field_.wells):
        q_o = well.oil(u[2 * i], u[2 * i + 1])
        y[3 * i:3 * i + 3] = (q_o, well.r_w * q_o, well.r_g * q_o)
    if field_.noise_std > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_std > 0")
        y = y + rng.normal(0.0, field_.noise_std, y.size)
    return y


def analytic_jacobian(field_: FieldModel, u) -> np.ndarray:
    u = _check_input(field_, u)
    J = np.zeros((field_.n_y, field_.n_u))
    for i, well in enumerate(field_.wells):
        row = np.array(well.oil_gradient(u[2 * i]))
        J[3 * i, 2 * i:2 * i + 2] = row
        J[3 * i + 1, 2 * i:2 * i + 2] = well.r_w * row
        J[3 * i + 2, 2 * i:2 * i + 2] = well.r_g * row
    return J


def output_prices(field_: FieldModel) -> np.ndarray:
    """Cost coefficients on ``y``: each price is matched to its own flow."""
    p = field_.prices
    return np.tile([-p.p_o, p.p_w, -p.p_g], field_.n_wells)


def input_prices(field_: FieldModel) -> np.ndarray:
    return np.tile([field_.prices.p_inj, 0.0], field_.n_wells)


def profit(field_: FieldModel, u, y) -> float:
    """Cost to be minimized, i.e. the negated profit."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(output_prices(field_) @ y + input_prices(field_) @ u)


def availability_constraints(cap: float, n_wells: int) -> PolyhedralSet:
    """Shared gas-lift cap plus the unit box on every input."""
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    n_u = 2 * n_wells
    total = np.zeros(n_u)
    total[0::2] = 1.0
    box = PolyhedralSet.box(np.zeros(n_u), np.ones(n_u))
    A = np.vstack([total, box.A])
    b = np.concatenate([[cap], box.b])
    return PolyhedralSet(A, b, (CAP_LABEL,) + box.labels)
