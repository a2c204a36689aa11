"""Gray-labelled QPSK and 16-QAM mapping with hard detection.

Labels are read MSB first. QPSK: bit 0 selects the in-phase sign and bit 1
the quadrature sign (0 -> +1, 1 -> -1), scaled by 1/sqrt(2).
16-QAM: bits 0-1 select the in-phase level and bits 2-3 the quadrature
level with the Gray map 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled by
1/sqrt(10). Both constellations have unit average power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PaddingRequiredError(ValueError):
    """Bit stream length is not a multiple of the bits per symbol."""


@dataclass(frozen=True, eq=False)
class Constellation:
    name: str
    bits_per_symbol: int
    points: np.ndarray  # points[label]

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol

    @property
    def labels(self) -> np.ndarray:
        """``(order, b)`` array of label bits, MSB first."""
        b = self.bits_per_symbol
        shifts = np.arange(b - 1, -1, -1)
        return ((np.arange(self.order)[:, None] >> shifts) & 1).astype(np.uint8)


def _make_qpsk() -> Constellation:
    pts = np.empty(4, dtype=np.complex128)
    for label in range(4):
        b0, b1 = label >> 1, label & 1
        pts[label] = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2)
    pts.setflags(write=False)
    return Constellation("QPSK", 2, pts)


_PAM4_GRAY = {0b00: -3, 0b01: -1, 0b11: 1, 0b10: 3}


def _make_qam16() -> Constellation:
    pts = np.empty(16, dtype=np.complex128)
    for label in range(16):
        pts[label] = (_PAM4_GRAY[label >> 2] + 1j * _PAM4_GRAY[label & 3]) / np.sqrt(10)
    pts.setflags(write=False)
    return Constellation("QAM16", 4, pts)


QPSK = _make_qpsk()
QAM16 = _make_qam16()

_BY_NAME = {"qpsk": QPSK, "qam16": QAM16, "16qam": QAM16}


def get_constellation(name: str) -> Constellation:
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}") from None


def map_bits(c: Constellation, bits) -> np.ndarray:
    """Map bits (last axis) to symbols; ``n`` bits give ``n / b`` symbols."""
    bits = np.asarray(bits, dtype=np.int64)
    b = c.bits_per_symbol
    if bits.shape[-1] % b:
        raise PaddingRequiredError(
            f"{bits.shape[-1]} bits is not a multiple of {b}; pad with zero bits"
        )
    groups = bits.reshape(bits.shape[:-1] + (bits.shape[-1] // b, b))
    weights = 1 << np.arange(b - 1, -1, -1)
    return c.points[groups @ weights]


def hard_detect_labels(c: Constellation, y) -> np.ndarray:
    """Minimum-distance labels for soft symbols ``y`` (any shape)."""
    y = np.asarray(y, dtype=np.complex128)
    d = np.abs(y[..., None] - c.points) ** 2
    return np.argmin(d, axis=-1)


def hard_detect(c: Constellation, y):
    """Nearest constellation point(s) and their label bits.

    Returns ``(bits, points)``; for an array ``y`` of shape ``S`` the bits
    have shape ``S[:-1] + (S[-1] * b,)``, for a scalar the bits have shape
    ``(b,)``. Ties go to the lowest label.
    """
    scalar = np.ndim(y) == 0
    labels = hard_detect_labels(c, np.atleast_1d(y))
    bits = c.labels[labels]
    bits = bits.reshape(labels.shape[:-1] + (labels.shape[-1] * c.bits_per_symbol,))
    points = c.points[labels]
    if scalar:
        return bits, complex(points[0])
    return bits, points
