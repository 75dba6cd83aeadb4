"""
CSV persistence for traces and Monte Carlo summaries.

A trace file starts with one comment line ``# variant=<name> seed=<int>``
followed by the header::

    t,u_0..u_{n_u-1},y_0..y_{n_y-1},cost,s_0..s_{n_u-1},excitation,excited,
    warmup,est_error,cap,fp_iterations

Flags are written as 0/1 and floats with 17 significant digits, so a
re-import reproduces every value bit for bit. Summary files use
``# variant=<name> runs=<int>`` and the header ``t,cap,mean,std``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .simulate import MonteCarloSummary, ScenarioTrace

_VECTORS = ("u", "y", "s")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def trace_header(n_u: int, n_y: int) -> list:
    head = ["t"] + [f"u_{i}" for i in range(n_u)] + [f"y_{i}" for i in range(n_y)] + ["cost"]
    head += [f"s_{i}" for i in range(n_u)]
    return head + ["excitation", "excited", "warmup", "est_error", "cap", "fp_iterations"]


def _write(path: Path, comment: str, header: list, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(comment + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write trace: {exc.strerror}", str(path)) from exc
    return path


def export_csv(trace: ScenarioTrace, path) -> Path:
    """Write ``trace`` to ``path``; an empty trace raises before anything is created."""
    if len(trace) == 0:
        raise ValueError("cannot export an empty trace")
    n_u, n_y = trace.u.shape[1], trace.y.shape[1]

    def rows():
        for k in range(len(trace)):
            yield ([str(int(trace.t[k]))] + [_fmt(x) for x in trace.u[k]] + [_fmt(x) for x in trace.y[k]]
                   + [_fmt(trace.cost[k])] + [_fmt(x) for x in trace.s[k]]
                   + [_fmt(trace.excitation[k]), str(int(trace.excited[k])), str(int(trace.warmup[k])),
                      _fmt(trace.est_error[k]), _fmt(trace.cap[k]), str(int(trace.fp_iterations[k]))])

    return _write(path, f"# variant={trace.variant} seed={trace.seed}", trace_header(n_u, n_y), rows())


def export_summary_csv(summary: MonteCarloSummary, path) -> Path:
    rows = ([str(t), _fmt(c), _fmt(m), _fmt(s)]
            for t, (c, m, s) in enumerate(zip(summary.cap, summary.mean, summary.std)))
    comment = f"# variant={summary.variant} runs={summary.runs}"
    return _write(path, comment, ["t", "cap", "mean", "std"], rows)


def _read(path: Path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            first = fh.readline()
            reader = csv.reader(fh)
            header = next(reader, None)
            body = [row for row in reader]
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read trace: {exc.strerror}", str(path)) from exc
    if not first.startswith("#") or header is None:
        raise ValueError(f"{path}: not a trace file")
    meta = dict(item.split("=", 1) for item in first[1:].split())
    return meta, header, body


def read_csv(path):
    """Load a file written by :func:`export_csv` or :func:`export_summary_csv`."""
    meta, header, body = _read(path)
    if not body:
        raise ValueError(f"{path}: no rows")
    data = np.array(body, dtype=float)
    col = {name: i for i, name in enumerate(header)}
    if header[:4] == ["t", "cap", "mean", "std"]:
        return MonteCarloSummary(mean=data[:, 2], std=data[:, 3], cap=data[:, 1], runs=int(meta.get("runs", 0)),
                                 seeds=[], variant=meta.get("variant", "gaussian"))
    try:
        def vec(prefix):
            idx = [i for name, i in col.items() if name.startswith(prefix + "_")]
            return data[:, idx]

        return ScenarioTrace(
            t=data[:, col["t"]].astype(int),
            u=vec("u"),
            y=vec("y"),
            cost=data[:, col["cost"]],
            s=vec("s"),
            excitation=data[:, col["excitation"]],
            excited=data[:, col["excited"]].astype(bool),
            warmup=data[:, col["warmup"]].astype(bool),
            est_error=data[:, col["est_error"]],
            cap=data[:, col["cap"]],
            fp_iterations=data[:, col["fp_iterations"]].astype(int),
            variant=meta.get("variant", "unknown"),
            seed=int(meta.get("seed", 0)),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing column {exc}") from exc
