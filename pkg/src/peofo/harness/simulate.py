"""Closed-loop runs and Monte Carlo batches."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import estimator as est
from .. import plant
from ..controller import ConstraintSpec, CostModel, OfoController
from ..errors import NumericalError, PeofoError
from .config import ScenarioConfig

log = logging.getLogger(__name__)

# completed fraction below which a Monte Carlo batch is rejected
MIN_COMPLETION = 0.95


@dataclass
class ScenarioTrace:
    """Per-step record of one closed-loop run.

    ``s`` holds the perturbation each variant adds: the applied input
    perturbation for ``pe``, the gradient-space draw for ``gaussian`` and
    zeros otherwise. ``excitation`` is ``|v_perp^T du|`` for the applied
    step ``du``.
    """

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    cost: np.ndarray
    s: np.ndarray
    excitation: np.ndarray
    excited: np.ndarray
    warmup: np.ndarray
    est_error: np.ndarray
    cap: np.ndarray
    fp_iterations: np.ndarray
    variant: str = "pe"
    seed: int = 0

    def __post_init__(self):
        n = len(self.t)
        for name in ("u", "y", "cost", "s", "excitation", "excited", "warmup", "est_error", "cap",
                     "fp_iterations"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"field {name} has {len(getattr(self, name))} rows, expected {n}")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("t must increase")

    def __len__(self):
        return len(self.t)

    @property
    def profit(self) -> float:
        """Cumulative profit, i.e. the negated summed cost."""
        return -float(np.sum(self.cost))

    @property
    def violations(self) -> int:
        """Post-warm-up steps that failed the excitation check."""
        return int(np.sum(~self.excited & ~self.warmup))


@dataclass
class MonteCarloSummary:
    mean: np.ndarray
    std: np.ndarray
    cap: np.ndarray
    runs: int
    seeds: list
    # (seed, message) for every run that raised
    failures: list = field(default_factory=list)
    variant: str = "gaussian"

    def __len__(self):
        return len(self.mean)

    @property
    def profit(self) -> float:
        return -float(np.sum(self.mean))


def scenario_cost(cfg: ScenarioConfig) -> CostModel:
    return CostModel.linear(plant.input_prices(cfg.field_model), plant.output_prices(cfg.field_model))


def run_scenario(cfg: ScenarioConfig) -> ScenarioTrace:
    """Simulate the closed loop for ``cfg.steps`` steps.

    Controller randomness and plant noise draw from independent streams
    spawned from ``cfg.seed``.

    Raises
    ------
    NumericalError
        If any step fails; the message carries the step index.
    """
    field_ = cfg.field_model
    ctl_seq, plant_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    plant_rng = np.random.default_rng(plant_seq)
    init = cfg.estimator_init
    estimate = est.SensitivityEstimate.initial(field_.n_u, field_.n_y, init.h0, init.sigma0)
    true_jac = lambda u: plant.analytic_jacobian(field_, u)  # noqa: E731
    ctl = OfoController(cfg.variant, scenario_cost(cfg), ConstraintSpec(cfg.input_set(0)), cfg.params,
                        np.array(cfg.u0), field_.n_y, estimate=estimate, noise=cfg.noise,
                        true_jacobian=true_jac, rng=np.random.default_rng(ctl_seq))

    T = cfg.steps
    rows = {k: [] for k in ("u", "y", "cost", "s", "excitation", "excited", "warmup", "est_error",
                            "cap", "fp_iterations")}
    caps = [cfg.cap_at(t) for t in range(T)]
    rows_for = {cap: plant.availability_constraints(cap, field_.n_wells) for cap in set(caps)}
    u = np.array(cfg.u0)
    for t in range(T):
        try:
            y = plant.evaluate(field_, u, plant_rng)
            u, rec = ctl.step(y, rows_for[caps[t]])
            err = float(np.linalg.norm(rec.jac - true_jac(rec.u)))
        except NumericalError:
            raise
        except PeofoError as exc:
            raise NumericalError(str(exc), step=t) from exc
        rows["u"].append(rec.u)
        rows["y"].append(rec.y)
        rows["cost"].append(rec.cost)
        rows["s"].append(rec.s)
        rows["excitation"].append(rec.excitation)
        rows["excited"].append(rec.excited)
        rows["warmup"].append(rec.warmup)
        rows["est_error"].append(err)
        rows["cap"].append(caps[t])
        rows["fp_iterations"].append(rec.fp_iterations)
    return ScenarioTrace(
        t=np.arange(T),
        u=np.array(rows["u"]),
        y=np.array(rows["y"]),
        cost=np.array(rows["cost"]),
        s=np.array(rows["s"]),
        excitation=np.array(rows["excitation"]),
        excited=np.array(rows["excited"], dtype=bool),
        warmup=np.array(rows["warmup"], dtype=bool),
        est_error=np.array(rows["est_error"]),
        cap=np.array(rows["cap"]),
        fp_iterations=np.array(rows["fp_iterations"], dtype=int),
        variant=cfg.variant,
        seed=cfg.seed,
    )


def _cost_series(cfg: ScenarioConfig):
    try:
        return cfg.seed, run_scenario(cfg).cost, None
    except PeofoError as exc:
        return cfg.seed, None, str(exc)


def monte_carlo(cfg: ScenarioConfig, runs: int, workers: Optional[int] = None) -> MonteCarloSummary:
    """Repeat ``cfg`` with seeds ``cfg.seed, cfg.seed + 1, ...`` and summarize the cost.

    Parameters
    ----------
    runs : int
        Number of runs requested.
    workers : int, optional
        Worker processes; ``None`` or 1 runs everything in this process.
        The summary does not depend on the worker count.

    Raises
    ------
    NumericalError
        If fewer than 95% of the runs complete.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    configs = [cfg.with_seed(cfg.seed + i) for i in range(runs)]
    if workers is None or workers <= 1:
        results = [_cost_series(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cost_series, configs, chunksize=max(1, runs // (4 * workers))))

    failures = [(seed, msg) for seed, _, msg in results if msg is not None]
    for seed, msg in failures:
        log.error("run with seed %d failed: %s", seed, msg)
    done = [(seed, cost) for seed, cost, msg in results if msg is None]
    if len(done) < MIN_COMPLETION * runs:
        raise NumericalError(f"only {len(done)} of {runs} Monte Carlo runs completed")
    costs = np.array([c for _, c in done])
    return MonteCarloSummary(
        mean=costs.mean(axis=0),
        std=costs.std(axis=0),
        cap=np.array([cfg.cap_at(t) for t in range(cfg.steps)]),
        runs=runs,
        seeds=[seed for seed, _ in done],
        failures=failures,
        variant=cfg.variant,
    )
