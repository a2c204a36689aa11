"""Pilot-based channel estimators.

The general estimators use the column-vector convention ``y = X h + n``
with ``X`` of shape ``(T, N)`` and ``y`` of shape ``(T,)`` or ``(T, K)``.
The uplink helpers use the row convention of the training phase,
``Y_a = sqrt(P) h x_a + N_a`` with ``Y_a`` of shape ``(M, T_a)`` and a
pilot row ``x_a`` of length ``T_a``; they broadcast over leading batch
axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelVector, DimensionError

PILOT_POWER_TOL = 1e-9


class SingularTrainingError(ValueError):
    """Training matrix is rank deficient, so LS has no unique solution."""


class InvalidPowerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrainingObservation:
    """Received pilot block of the pure-training phase."""

    Y_a: np.ndarray
    x_a: np.ndarray
    P: float

    def __post_init__(self):
        Y = np.asarray(self.Y_a, dtype=np.complex128)
        x = np.asarray(self.x_a, dtype=np.complex128).reshape(-1)
        if Y.ndim != 2 or Y.shape[1] != x.size or x.size < 1:
            raise DimensionError(f"Y_a shape {Y.shape} does not match pilot length {x.size}")
        power = np.sum(np.abs(x) ** 2) / x.size
        if abs(power - 1.0) > PILOT_POWER_TOL:
            raise ValueError(f"pilot must have unit average power, got {power}")
        object.__setattr__(self, "Y_a", Y)
        object.__setattr__(self, "x_a", x)

    @property
    def t_a(self) -> int:
        return self.x_a.size


@dataclass(frozen=True)
class EstimateWithQuality:
    hhat: ChannelVector
    per_coeff_mse: float


def unit_pilot(t_a: int) -> np.ndarray:
    """All-ones pilot row of length ``t_a`` (unit average power)."""
    if t_a < 1:
        raise DimensionError(f"pilot length must be >= 1, got {t_a}")
    return np.ones(t_a, dtype=np.complex128)


def ls_estimate(Y, X, scale: float = 1.0) -> np.ndarray:
    """Least-squares solution ``(X^H X)^{-1} X^H Y / scale``.

    Parameters
    ----------
    Y : array, shape (T,) or (T, K)
    X : array, shape (T, N)
        Training matrix; must have full column rank.
    scale : float
        Known amplitude of the training (``sqrt(P)`` in the uplink model).
    """
    X = np.asarray(X, dtype=np.complex128)
    Y = np.asarray(Y, dtype=np.complex128)
    if X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise DimensionError(f"shapes X{X.shape} and Y{Y.shape} are not conformable")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularTrainingError("training matrix does not have full column rank")
    gram = X.conj().T @ X
    return np.linalg.solve(gram, X.conj().T @ Y) / scale


def mmse_estimate_general(Y, X) -> np.ndarray:
    """Regularised estimate ``(X^H X + I)^{-1} X^H Y`` for a CN(0, I) prior."""
    X = np.asarray(X, dtype=np.complex128)
    Y = np.asarray(Y, dtype=np.complex128)
    if X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise DimensionError(f"shapes X{X.shape} and Y{Y.shape} are not conformable")
    gram = X.conj().T @ X + np.eye(X.shape[1])
    return np.linalg.solve(gram, X.conj().T @ Y)


def uplink_ls(Y, x, P: float) -> np.ndarray:
    """Rank-1 LS channel estimate ``Y x^H (x x^H)^{-1} / sqrt(P)``.

    ``Y`` has shape ``(..., M, T)`` and ``x`` shape ``(..., T)``; used both
    for the pilot-only estimate and for re-estimation from extended pilots.
    """
    Y = np.asarray(Y)
    x = np.asarray(x)
    energy = np.sum(np.abs(x) ** 2, axis=-1)
    if np.any(energy == 0):
        raise SingularTrainingError("pilot row has zero energy")
    corr = np.einsum("...mt,...t->...m", Y, np.conj(x))
    return corr / (energy[..., None] * np.sqrt(P))


def uplink_mmse(Y, x, P: float) -> tuple[np.ndarray, float]:
    """Energy-collapsed MMSE estimate for a rank-1 pilot.

    With ``E = ||x||^2`` the pilot block reduces to ``y = sqrt(P E) h + n``,
    giving ``hhat = sqrt(P E) / (P E + 1) * y`` and a per-coefficient error
    variance ``1 / (P E + 1)``.
    """
    if P <= 0:
        raise InvalidPowerError(f"transmit power must be positive, got {P}")
    Y = np.asarray(Y)
    x = np.asarray(x)
    energy = float(np.sum(np.abs(x) ** 2))
    y = np.einsum("...mt,t->...m", Y, np.conj(x)) / np.sqrt(energy)
    pe = P * energy
    return np.sqrt(pe) / (pe + 1.0) * y, 1.0 / (pe + 1.0)


def mmse_training_estimate(obs: TrainingObservation) -> EstimateWithQuality:
    hhat, mse = uplink_mmse(obs.Y_a, obs.x_a, obs.P)
    return EstimateWithQuality(ChannelVector(hhat), mse)
