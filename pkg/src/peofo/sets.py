from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PolyhedralSet:
    """The set ``{x : A x <= b}``.

    ``labels`` optionally names each row so that rows such as a shared
    resource cap can be located and changed over time.
    """

    A: np.ndarray
    b: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.labels and len(self.labels) != b.size:
            raise ValueError("labels must name every row")

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def residual(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b

    def violation(self, x) -> float:
        """Largest amount by which ``x`` breaks a row (0 if feasible)."""
        return float(np.maximum(self.residual(x), 0.0).max(initial=0.0))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.violation(x) <= tol

    def with_rhs(self, label: str, value: float) -> "PolyhedralSet":
        """Copy with the right-hand side of every row named ``label`` replaced."""
        idx = [i for i, name in enumerate(self.labels) if name == label]
        if not idx:
            raise KeyError(label)
        b = self.b.copy()
        b[idx] = value
        return PolyhedralSet(self.A, b, self.labels)

    @classmethod
    def box(cls, lower, upper) -> "PolyhedralSet":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.size
        A = np.vstack([np.eye(n), -np.eye(n)])
        labels = tuple(f"ub{i}" for i in range(n)) + tuple(f"lb{i}" for i in range(n))
        return cls(A, np.concatenate([upper, -lower]), labels)
