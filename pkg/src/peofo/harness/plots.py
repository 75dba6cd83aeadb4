"""SVG figures: cost against the cap schedule, and the applied perturbations."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulate import MonteCarloSummary, ScenarioTrace  # noqa: E402

# fixed ids and no timestamp keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "peofo"
_SVG_META = {"Date": None}


def _save(fig, path: Path) -> Path:
    try:
        fig.savefig(path, format="svg", metadata=_SVG_META)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write figure: {exc.strerror}", str(path)) from exc
    finally:
        plt.close(fig)
    return path


def plot_cost(items, path, labels=None) -> Path:
    """Cost per step for each trace (mean and +-1 std band for summaries), cap on a second axis."""
    items = list(items)
    if not items:
        raise ValueError("nothing to plot")
    labels = labels or [it.variant if isinstance(it, ScenarioTrace) else f"{it.variant} mean" for it in items]
    fig, ax = plt.subplots(figsize=(8, 4))
    for it, label in zip(items, labels):
        t = np.arange(len(it))
        if isinstance(it, MonteCarloSummary):
            line, = ax.plot(t, it.mean, label=label)
            ax.fill_between(t, it.mean - it.std, it.mean + it.std, color=line.get_color(), alpha=0.25,
                            label=f"{label} +-1 std")
        else:
            ax.plot(t, it.cost, label=label)
    ax.set_xlabel("time step")
    ax.set_ylabel("cost (negative profit)")
    cap_ax = ax.twinx()
    cap_ax.step(np.arange(len(items[0])), items[0].cap, where="post", color="0.4", linestyle="--",
                label="gas lift cap")
    cap_ax.set_ylabel("gas lift cap")
    handles = ax.get_legend_handles_labels()
    cap_handles = cap_ax.get_legend_handles_labels()
    ax.legend(handles[0] + cap_handles[0], handles[1] + cap_handles[1], loc="upper right", fontsize="small")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_perturbation(trace: ScenarioTrace, path, alpha: float = 1e-3) -> Path:
    """One panel per input; ``pe`` perturbations are shown divided by ``alpha``."""
    scale = 1.0 / alpha if trace.variant == "pe" else 1.0
    n = trace.s.shape[1]
    fig, axes = plt.subplots(n, 1, figsize=(8, 1.2 * n + 1), sharex=True, squeeze=False)
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(trace.t, trace.s[:, i] * scale, linewidth=0.8)
        ax.set_ylabel(f"input {i}", fontsize="small")
    title = "perturbation / step size" if trace.variant == "pe" else "perturbation"
    axes[0, 0].set_title(f"{trace.variant}: {title}")
    axes[-1, 0].set_xlabel("time step")
    fig.tight_layout()
    return _save(fig, Path(path))


def render_plots(items, out_dir, alpha: float = 1e-3, labels=None) -> list:
    """Write ``cost.svg`` plus ``perturbation_<variant>.svg`` for each perturbed trace."""
    out_dir = Path(out_dir)
    paths = [plot_cost(items, out_dir / "cost.svg", labels)]
    for it in items:
        if isinstance(it, ScenarioTrace) and it.variant in ("pe", "gaussian"):
            paths.append(plot_perturbation(it, out_dir / f"perturbation_{it.variant}.svg", alpha))
    return paths
