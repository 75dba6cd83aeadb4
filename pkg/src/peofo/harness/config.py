"""
Scenario configuration.

Scenarios are TOML files. Every key is optional; omitted keys take the
values of the gas-lift case study. The canonical schema, with defaults::

    variant = "pe"          # plain | gaussian | pe | oracle
    steps = 500
    seed = 0

    [initial]
    u0 = [0.1, 0.5, 0.1, 0.5, 0.1, 0.5, 0.1, 0.5]   # (q_inj, v) per well

    [schedule]              # gas-lift cap, piecewise constant
    start = [0, 100, 200, 300, 400]
    cap = [2.0, 1.2, 2.6, 1.6, 2.2]

    [controller]
    alpha = 0.001
    epsilon = 1e-9
    gamma = 4.0
    s_lo = -0.005
    s_hi = 0.005
    sigma_noise = 5.0
    fp_max_iter = 20
    fp_tol = 1e-9

    [estimator]
    h0 = 1.0                # initial value of every Jacobian entry
    sigma0 = 1.0            # initial covariance is sigma0 * I
    sigma_p1 = 1.0
    sigma_p2 = 1.0
    sigma_m1 = 0.01
    sigma_m2 = 0.01
    sigma_m3 = 0.01

    [plant]
    noise_std = 0.0

    [prices]
    p_o = 5.0
    p_g = 1.0
    p_w = 0.3
    p_inj = 0.7

    [[wells]]               # repeat once per well; all four by default (first shown)
    a = 5.0
    b = 25.0
    c = 0.05
    d = 2.0
    norm = 34.5
    r_g = 0.1
    r_w = 0.3
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .. import estimator as est
from ..controller import VARIANTS, PeParameters
from ..errors import ConfigError
from ..plant import DEFAULT_WELLS, FieldModel, PriceModel, WellModel, availability_constraints

DEFAULT_SCHEDULE = ((0, 2.0), (100, 1.2), (200, 2.6), (300, 1.6), (400, 2.2))


@dataclass(frozen=True)
class EstimatorInit:
    h0: float = 1.0
    sigma0: float = 1.0

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one closed-loop run."""

    variant: str = "pe"
    steps: int = 500
    seed: int = 0
    field_model: FieldModel = field(default_factory=FieldModel)
    params: PeParameters = field(default_factory=PeParameters)
    noise: est.NoiseModel = field(default_factory=est.NoiseModel)
    estimator_init: EstimatorInit = field(default_factory=EstimatorInit)
    # (start step, cap) pairs; start steps strictly increase from 0
    schedule: tuple = DEFAULT_SCHEDULE
    u0: Optional[tuple] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError("steps must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        schedule = tuple((int(s), float(c)) for s, c in self.schedule)
        if not schedule or schedule[0][0] != 0:
            raise ConfigError("the schedule must start at step 0")
        starts = [s for s, _ in schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("schedule start steps must strictly increase")
        if any(c < 0 for _, c in schedule):
            raise ConfigError("caps must be nonnegative")
        object.__setattr__(self, "schedule", schedule)
        n_u = self.field_model.n_u
        u0 = self.u0 if self.u0 is not None else tuple(np.tile([0.1, 0.5], self.field_model.n_wells))
        u0 = tuple(float(x) for x in u0)
        if len(u0) != n_u:
            raise ConfigError(f"u0 needs {n_u} entries, got {len(u0)}")
        object.__setattr__(self, "u0", u0)
        if not self.input_set(0).contains(np.array(u0)):
            raise ConfigError("u0 is infeasible for the step-0 constraints")

    def cap_at(self, t: int) -> float:
        cap = self.schedule[0][1]
        for start, value in self.schedule:
            if start <= t:
                cap = value
        return cap

    def input_set(self, t: int):
        return availability_constraints(self.cap_at(t), self.field_model.n_wells)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=seed)

    def with_variant(self, variant: str) -> "ScenarioConfig":
        return dataclasses.replace(self, variant=variant)


_TOP = {"variant", "steps", "seed", "initial", "schedule", "controller", "estimator", "plant",
        "prices", "wells"}


def _take(table: dict, allowed, where: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return dict(table)


def _build(cls, table: dict, where: str):
    names = [f.name for f in dataclasses.fields(cls)]
    kwargs = _take(table, names, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a config from parsed TOML, reporting the offending table on error."""
    data = _take(data, _TOP, "top level")
    kwargs = {}
    for key in ("variant", "steps", "seed"):
        if key in data:
            kwargs[key] = data[key]

    wells = DEFAULT_WELLS
    if "wells" in data:
        if not isinstance(data["wells"], list) or not data["wells"]:
            raise ConfigError("[[wells]] must list at least one well")
        wells = tuple(_build(WellModel, w, f"wells.{i}") for i, w in enumerate(data["wells"]))
    prices = _build(PriceModel, data.get("prices", {}), "prices")
    plant = _take(data.get("plant", {}), ["noise_std"], "plant")
    noise_std = float(plant.get("noise_std", 0.0))
    if noise_std < 0:
        raise ConfigError("[plant] noise_std must be nonnegative")
    kwargs["field_model"] = FieldModel(wells, prices, noise_std)

    kwargs["params"] = _build(PeParameters, data.get("controller", {}), "controller")

    est_table = _take(data.get("estimator", {}),
                      ["h0", "sigma0", "sigma_p1", "sigma_p2", "sigma_m1", "sigma_m2", "sigma_m3"],
                      "estimator")
    init = {k: est_table.pop(k) for k in ("h0", "sigma0") if k in est_table}
    kwargs["estimator_init"] = _build(EstimatorInit, init, "estimator")
    kwargs["noise"] = _build(est.NoiseModel, est_table, "estimator")

    if "schedule" in data:
        sched = _take(data["schedule"], ["start", "cap"], "schedule")
        if set(sched) != {"start", "cap"} or len(sched["start"]) != len(sched["cap"]):
            raise ConfigError("[schedule] needs start and cap lists of equal length")
        kwargs["schedule"] = tuple(zip(sched["start"], sched["cap"]))
    if "initial" in data:
        initial = _take(data["initial"], ["u0"], "initial")
        if "u0" in initial:
            kwargs["u0"] = tuple(initial["u0"])
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    """Read a scenario file.

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigError
        If it is not valid TOML or does not describe a valid scenario.
    """
    path = Path(path)
    with path.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
