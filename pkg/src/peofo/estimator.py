"""
Recursive least-squares estimation of a steady-state plant Jacobian.

The Jacobian ``G = dh/du`` (shape ``n_y x n_u``) is tracked through its
column-wise vectorization ``h_hat = vec(G)``, so that an input/output delta
pair satisfies ``dy = (du^T kron I_ny) h_hat``. Each update is a Kalman
measurement update with a random-walk process model; the covariance is
propagated in Joseph form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError


@dataclass(frozen=True)
class NoiseModel:
    """Scalar coefficients of the process and measurement covariances.

    Each coefficient multiplies an identity of the matching size::

        Sigma_p = (p1 + p2 |du|^2) I_{n_u n_y}
        Sigma_m = (m1 + m2 |du|^2 + m3 |du|^4) I_{n_y}
    """

    sigma_p1: float = 1.0
    sigma_p2: float = 1.0
    sigma_m1: float = 0.01
    sigma_m2: float = 0.01
    sigma_m3: float = 0.01

    def __post_init__(self):
        for name in ("sigma_p1", "sigma_p2", "sigma_m1", "sigma_m2", "sigma_m3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class SensitivityEstimate:
    h_hat: np.ndarray
    sigma: np.ndarray
    n_u: int
    n_y: int

    def __post_init__(self):
        n = self.n_u * self.n_y
        if self.h_hat.shape != (n,):
            raise ValueError(f"h_hat has shape {self.h_hat.shape}, expected {(n,)}")
        if self.sigma.shape != (n, n):
            raise ValueError(f"sigma has shape {self.sigma.shape}, expected {(n, n)}")

    @classmethod
    def initial(cls, n_u: int, n_y: int, h0: float | np.ndarray = 1.0, sigma0: float = 1.0):
        """Estimate with ``h_hat = h0`` (a scalar fills every entry) and ``sigma = sigma0 * I``."""
        n = n_u * n_y
        h = np.full(n, float(h0)) if np.isscalar(h0) else np.asarray(h0, dtype=float).copy()
        return cls(h, sigma0 * np.eye(n), n_u, n_y)

    @classmethod
    def from_jacobian(cls, G: np.ndarray, sigma0: float = 1.0):
        G = np.asarray(G, dtype=float)
        n_y, n_u = G.shape
        return cls(vectorize(G), sigma0 * np.eye(n_u * n_y), n_u, n_y)


def vectorize(G: np.ndarray) -> np.ndarray:
    """Stack the columns of ``G``."""
    return np.asarray(G, dtype=float).reshape(-1, order="F").copy()


def jacobian(state: SensitivityEstimate) -> np.ndarray:
    """Return the ``n_y x n_u`` matrix whose column-wise vectorization is ``h_hat``."""
    return state.h_hat.reshape((state.n_y, state.n_u), order="F").copy()


def noise_covariances(model: NoiseModel, delta_u: np.ndarray, n_y: int):
    """Process and measurement covariances for an input step ``delta_u``."""
    delta_u = np.asarray(delta_u, dtype=float).ravel()
    sq = float(delta_u @ delta_u)
    n_u = delta_u.size
    sigma_p = (model.sigma_p1 + model.sigma_p2 * sq) * np.eye(n_u * n_y)
    sigma_m = (model.sigma_m1 + model.sigma_m2 * sq + model.sigma_m3 * sq * sq) * np.eye(n_y)
    return sigma_p, sigma_m


def update(state: SensitivityEstimate, model: NoiseModel, delta_u, delta_y) -> SensitivityEstimate:
    """One recursive least-squares step with the observed deltas.

    Raises
    ------
    NumericalError
        If the innovation covariance is not positive definite.
    """
    delta_u = np.asarray(delta_u, dtype=float).ravel()
    delta_y = np.asarray(delta_y, dtype=float).ravel()
    n_u, n_y = state.n_u, state.n_y
    if delta_u.size != n_u or delta_y.size != n_y:
        raise ValueError(
            f"expected deltas of length {n_u} and {n_y}, got {delta_u.size} and {delta_y.size}"
        )
    sigma_p, sigma_m = noise_covariances(model, delta_u, n_y)
    # U = kron(delta_u^T, I); products with U are taken blockwise instead of forming it
    P = state.sigma
    N = n_u * n_y
    PUt = P.reshape(N, n_u, n_y).transpose(0, 2, 1) @ delta_u
    S = sigma_m + (PUt.reshape(n_u, n_y, n_y).transpose(1, 2, 0) @ delta_u)
    try:
        factor = scipy.linalg.cho_factor(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is singular") from exc
    K = scipy.linalg.cho_solve(factor, PUt.T).T

    predicted = state.h_hat.reshape(n_u, n_y).T @ delta_u
    h = state.h_hat + K @ (delta_y - predicted)
    # Joseph form (I - KU) P (I - KU)^T + K sigma_m K^T expanded into rank-n_y terms
    KPU = K @ PUt.T
    sigma = P - KPU - KPU.T + K @ S @ K.T + sigma_p
    sigma = 0.5 * (sigma + sigma.T)
    return SensitivityEstimate(h, sigma, n_u, n_y)
