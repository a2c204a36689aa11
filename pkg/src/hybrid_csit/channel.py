"""Channel vectors, reproducible random streams and the squared CDI error."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

DIRECTION_TOL = 1e-12


class DimensionError(ValueError):
    """Raised for empty or mismatched vector/matrix dimensions."""


class UndefinedDirectionError(ValueError):
    """Raised when the direction of a zero vector is requested."""


@dataclass(frozen=True, eq=False)
class ChannelVector:
    """An M-dimensional complex channel ``h = ||h|| * direction``.

    The entries are copied and frozen on construction, so instances can be
    shared freely between workers.
    """

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.complex128).reshape(-1)
        if arr.size == 0:
            raise DimensionError("channel vector must have at least one entry")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def m(self) -> int:
        return self.entries.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def direction(self) -> "ChannelVector":
        nrm = self.norm
        if nrm == 0.0:
            raise UndefinedDirectionError("zero vector has no direction")
        return ChannelVector(self.entries / nrm)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return f"ChannelVector(m={self.m}, norm={self.norm:.6g})"


StreamId = Union[int, Sequence[int]]


class RngStream:
    """A numpy ``Generator`` keyed by ``(seed, stream id)``.

    Two streams built from the same seed and stream id yield identical draw
    sequences; distinct stream ids are statistically independent (they are
    distinct ``SeedSequence`` spawn keys).
    """

    def __init__(self, seed: int, stream: StreamId = 0):
        if isinstance(stream, (int, np.integer)):
            key = (int(stream),)
        else:
            key = tuple(int(s) for s in stream)
        self.seed = int(seed)
        self.stream = key
        self.generator = np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=key)
        )

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


def complex_normal(rng, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussians of ``shape``."""
    gen = as_generator(rng)
    re = gen.standard_normal(shape)
    im = gen.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


def draw_channel(m: int, rng) -> ChannelVector:
    """One i.i.d. CN(0, 1) channel vector of dimension ``m``."""
    if m < 1:
        raise DimensionError(f"antenna count must be >= 1, got {m}")
    return ChannelVector(complex_normal(rng, m))


def draw_channels(n: int, m: int, rng) -> np.ndarray:
    """Batch of ``n`` channel vectors as an ``(n, m)`` array."""
    if n < 1 or m < 1:
        raise DimensionError(f"invalid batch shape ({n}, {m})")
    return complex_normal(rng, (n, m))


def draw_noise_matrix(m: int, t: int, rng) -> np.ndarray:
    """``m x t`` matrix of i.i.d. CN(0, 1) noise."""
    if m < 1 or t < 1:
        raise DimensionError(f"invalid noise shape ({m}, {t})")
    return complex_normal(rng, (m, t))


def squared_cdi_error(h, hhat) -> Union[float, np.ndarray]:
    """Squared chordal distance ``1 - |<h/|h|, hhat/|hhat|>|^2``.

    Accepts single vectors or batches along leading axes; the last axis is
    the antenna dimension. Returns a float for single vectors.
    """
    a = np.asarray(h, dtype=np.complex128)
    b = np.asarray(hhat, dtype=np.complex128)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    sa = np.max(np.abs(a), axis=-1, keepdims=True)
    sb = np.max(np.abs(b), axis=-1, keepdims=True)
    if np.any(sa == 0) or np.any(sb == 0):
        raise UndefinedDirectionError("squared CDI error undefined for a zero vector")
    # rescale so tiny or huge inputs neither underflow nor overflow
    a = a / sa
    b = b / sb
    na = np.sum(np.abs(a) ** 2, axis=-1)
    nb = np.sum(np.abs(b) ** 2, axis=-1)
    inner = np.sum(np.conj(a) * b, axis=-1)
    err = 1.0 - np.abs(inner) ** 2 / (na * nb)
    err = np.clip(err, 0.0, 1.0)
    if err.ndim == 0:
        return float(err)
    return err
