"""Profit, regret and violation summaries across runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PeofoError
from .simulate import MonteCarloSummary, ScenarioTrace


class TraceMismatchError(PeofoError, ValueError):
    """Traces that do not share a schedule and step count."""


def _costs(item) -> np.ndarray:
    return item.mean if isinstance(item, MonteCarloSummary) else item.cost


def segments(cap: np.ndarray) -> list:
    """``(start, stop)`` index ranges over which the cap is constant."""
    cut = np.flatnonzero(np.diff(cap) != 0) + 1
    edges = [0, *cut.tolist(), len(cap)]
    return list(zip(edges[:-1], edges[1:]))


@dataclass
class CompareReport:
    labels: list
    profit: dict
    # pct_diff[(a, b)] = 100 (profit_a - profit_b) / |profit_b|
    pct_diff: dict
    # per-step cost minus the oracle's cost; empty without an oracle trace
    regret: dict = field(default_factory=dict)
    # regret summed over each constant-cap segment
    segment_regret: dict = field(default_factory=dict)
    # oracle profit per constant-cap segment
    oracle_segment_profit: list = field(default_factory=list)
    violations: dict = field(default_factory=dict)

    def lines(self) -> list:
        out = [f"{'label':<24}{'profit':>16}{'violations':>12}"]
        for k in self.labels:
            v = self.violations.get(k)
            out.append(f"{k:<24}{self.profit[k]:>16.6f}{'-' if v is None else v:>12}")
        for (a, b), d in self.pct_diff.items():
            out.append(f"{a} vs {b}: {d:+.4f}%")
        for k, seg in self.segment_regret.items():
            out.append(f"{k} segment regret: " + ", ".join(f"{r:.6g}" for r in seg))
        return out


def _label(item, used) -> str:
    base = item.variant if isinstance(item, ScenarioTrace) else f"{item.variant}-mean"
    label, i = base, 1
    while label in used:
        i += 1
        label = f"{base}#{i}"
    return label


def compare_report(items, labels=None) -> CompareReport:
    """Compare traces and Monte Carlo summaries that share one schedule.

    An item labelled ``oracle`` (the default label of an oracle trace)
    serves as the regret reference. Violations count post-warm-up steps
    failing the excitation check and are only available for traces.
    """
    items = list(items)
    if not items:
        raise ValueError("nothing to compare")
    ref = items[0]
    for it in items[1:]:
        if len(it) != len(ref) or not np.array_equal(it.cap, ref.cap):
            raise TraceMismatchError("traces do not share the same schedule and step count")
    if labels is None:
        labels = []
        for it in items:
            labels.append(_label(it, labels))
    elif len(set(labels)) != len(items):
        raise ValueError("need one distinct label per item")
    labels = list(labels)
    by_label = dict(zip(labels, items))

    profit = {k: -float(np.sum(_costs(it))) for k, it in by_label.items()}
    pct = {}
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            pct[(a, b)] = 100.0 * (profit[a] - profit[b]) / abs(profit[b])
    report = CompareReport(labels, profit, pct)
    report.violations = {k: it.violations for k, it in by_label.items() if isinstance(it, ScenarioTrace)}
    if "oracle" in by_label:
        base = _costs(by_label["oracle"])
        segs = segments(np.asarray(ref.cap))
        report.oracle_segment_profit = [-float(np.sum(base[a:b])) for a, b in segs]
        for k, it in by_label.items():
            r = _costs(it) - base
            report.regret[k] = r
            report.segment_regret[k] = [float(np.sum(r[a:b])) for a, b in segs]
    return report
