"""Random vector quantization (RVQ) of channel directions.

Codewords are generated from a counter-based hash of ``(seed, index)``
rather than a sequential RNG, so ``codeword(i)`` costs the same whether the
codebook is materialised (explicit mode) or not (lazy mode) and both modes
agree bit-for-bit. The hash is SplitMix64; pairs of 53-bit uniforms feed a
Box-Muller transform giving the real and imaginary parts of each entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .channel import (
    ChannelVector,
    DimensionError,
    as_generator,
    complex_normal,
    squared_cdi_error,
)

B_MAX = 20

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class InfeasibleEnumerationError(RuntimeError):
    """The codebook is too large to enumerate."""


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _n_limbs(bits: int) -> int:
    return max(1, -(-bits // 64))


def _keys_from_limbs(seed: int, limbs: np.ndarray) -> np.ndarray:
    """Fold ``(n, L)`` little-endian uint64 limbs into one key per row."""
    n = limbs.shape[0]
    key = _splitmix(np.full(n, seed & _MASK64, dtype=np.uint64))
    for j in range(limbs.shape[1]):
        key = _splitmix(key ^ limbs[:, j])
    return key


def _vectors_from_keys(keys: np.ndarray, m: int) -> np.ndarray:
    n = keys.size
    ctr = (np.arange(1, 2 * m + 1, dtype=np.uint64) * _GOLDEN)[None, :]
    with np.errstate(over="ignore"):
        raw = _splitmix(keys[:, None] + ctr)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1, u2 = u[:, 0::2], u[:, 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    v = r * np.cos(2 * np.pi * u2) + 1j * r * np.sin(2 * np.pi * u2)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.reshape(n, m)


def bits_to_limbs(bits: np.ndarray) -> np.ndarray:
    """MSB-first bit rows ``(n, B)`` to little-endian uint64 limbs ``(n, L)``."""
    bits = np.asarray(bits, dtype=np.uint8)
    n, nb = bits.shape
    n_limbs = _n_limbs(nb)
    padded = np.zeros((n, n_limbs * 64), dtype=np.uint8)
    padded[:, n_limbs * 64 - nb:] = bits
    packed = np.packbits(padded, axis=1)
    limbs = packed.view(">u8").astype(np.uint64)
    return limbs[:, ::-1].copy()


def int_to_bits(index: int, nbits: int) -> np.ndarray:
    """Index as an MSB-first bit array of length ``nbits``."""
    return np.array([(index >> (nbits - 1 - k)) & 1 for k in range(nbits)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    out = 0
    for bit in np.asarray(bits).reshape(-1):
        out = (out << 1) | int(bit)
    return out


def index_bits(indices: np.ndarray, nbits: int) -> np.ndarray:
    """Vectorised ``int_to_bits`` for small non-negative integer indices."""
    idx = np.asarray(indices, dtype=np.int64)
    shifts = np.arange(nbits - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True)
class Codebook:
    """A seeded RVQ codebook of ``2**bits`` unit-norm ``m``-vectors."""

    m: int
    bits: int
    seed: int = 0
    mode: str = "explicit"

    def __post_init__(self):
        if self.m < 1:
            raise DimensionError(f"codebook dimension must be >= 1, got {self.m}")
        if self.bits < 0:
            raise ValueError(f"codebook bits must be >= 0, got {self.bits}")
        if self.mode not in ("explicit", "lazy"):
            raise ValueError(f"unknown materialization mode {self.mode!r}")
        if self.mode == "explicit" and self.bits > B_MAX:
            raise InfeasibleEnumerationError(
                f"explicit codebooks are limited to {B_MAX} bits, got {self.bits}"
            )

    @property
    def size(self) -> int:
        return 1 << self.bits

    @property
    def enumerable(self) -> bool:
        return self.bits <= B_MAX

    @cached_property
    def vectors(self) -> np.ndarray:
        """All codewords as a read-only ``(2**bits, m)`` array."""
        if not self.enumerable:
            raise InfeasibleEnumerationError(
                f"cannot enumerate a {self.bits}-bit codebook (limit {B_MAX})"
            )
        idx = np.arange(self.size, dtype=np.uint64)[:, None]
        v = _vectors_from_keys(_keys_from_limbs(self.seed, idx), self.m)
        v.setflags(write=False)
        return v

    def codewords_from_bits(self, bits: np.ndarray) -> np.ndarray:
        """Codewords for MSB-first index bit rows ``(n, bits)``."""
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[1] != self.bits:
            raise DimensionError(f"expected (n, {self.bits}) index bits, got {bits.shape}")
        if self.bits == 0:
            limbs = np.zeros((bits.shape[0], 1), dtype=np.uint64)
        else:
            limbs = bits_to_limbs(bits)
        return _vectors_from_keys(_keys_from_limbs(self.seed, limbs), self.m)


def codeword(cb: Codebook, i: int) -> ChannelVector:
    """Codeword ``i``; a pure function of ``(cb.seed, i)``."""
    i = int(i)
    if not 0 <= i < cb.size:
        raise IndexError(f"codeword index {i} out of range [0, 2**{cb.bits})")
    limbs = np.array([[(i >> (64 * j)) & _MASK64 for j in range(_n_limbs(cb.bits))]],
                     dtype=np.uint64)
    return ChannelVector(_vectors_from_keys(_keys_from_limbs(cb.seed, limbs), cb.m)[0])


@dataclass(frozen=True)
class QuantizationReport:
    index: int
    codeword: ChannelVector
    sq_error: float


def quantize_batch(cb: Codebook, H: np.ndarray, chunk: int = 1 << 14):
    """Nearest codewords (max ``|h_dir^H c|``) for each row of ``H``.

    Returns ``(indices, sq_errors)``. Ties resolve to the lowest index.
    """
    if not cb.enumerable:
        raise InfeasibleEnumerationError(
            f"quantize needs full enumeration; {cb.bits} bits exceeds {B_MAX}"
        )
    H = np.atleast_2d(np.asarray(H, dtype=np.complex128))
    if H.shape[1] != cb.m:
        raise DimensionError(f"channel dimension {H.shape[1]} != codebook dimension {cb.m}")
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot quantize a zero channel")
    Hd = H / norms[:, None]
    C = cb.vectors
    best = np.full(H.shape[0], -1.0)
    best_idx = np.zeros(H.shape[0], dtype=np.int64)
    for start in range(0, cb.size, chunk):
        gains = np.abs(Hd.conj() @ C[start:start + chunk].T) ** 2
        k = np.argmax(gains, axis=1)
        g = gains[np.arange(H.shape[0]), k]
        better = g > best
        best[better] = g[better]
        best_idx[better] = k[better] + start
    return best_idx, np.clip(1.0 - best, 0.0, 1.0)


def quantize(cb: Codebook, h) -> QuantizationReport:
    idx, err = quantize_batch(cb, np.asarray(h)[None, :])
    i = int(idx[0])
    return QuantizationReport(i, ChannelVector(cb.vectors[i]), float(err[0]))


def _log_gamma_ratio(log_n: float, a: float) -> float:
    """``ln Gamma(n) - ln Gamma(n + a)`` for ``n = exp(log_n)``, stable for huge n."""
    n = math.exp(log_n) if log_n < 700 else math.inf
    if n < 1e3:
        return float(gammaln(n) - gammaln(n + a))
    # Stirling series difference; truncation error < 1e-15 for n >= 1e3
    x = a / n
    n_log1p = a if x == 0.0 else a * math.log1p(x) / x  # n * log1p(a/n)
    s = -n_log1p - (a - 0.5) * math.log1p(x) - a * log_n + a
    r1, r2 = 1.0 / n, 1.0 / (n + a)
    s += (r1 / 12 - r1**3 / 360) - (r2 / 12 - r2**3 / 360)
    return s


def exact_quant_mse(m: int, b_total: float) -> float:
    """Mean RVQ error ``2^B * Beta(2^B, m/(m-1))``, evaluated in log space.

    ``b_total`` may be real-valued (used by the surrogate quantizer).
    """
    if m < 2:
        raise DimensionError("quantization error is undefined for m < 2")
    if b_total < 0:
        raise ValueError(f"b_total must be >= 0, got {b_total}")
    log_n = b_total * math.log(2.0)
    a = m / (m - 1.0)
    return float(math.exp(log_n + gammaln(a) + _log_gamma_ratio(log_n, a)))


def quant_mse_bound(m: int, b_total: float) -> float:
    """Upper bound ``2^(-B/(m-1))`` on the mean RVQ error."""
    if m < 2:
        raise DimensionError("quantization error is undefined for m < 2")
    return float(2.0 ** (-b_total / (m - 1)))


def sample_min_sq_error(m: int, b_total: float, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of the minimum of ``2^B`` Beta(m-1, 1) variables.

    ``F(x) = 1 - (1 - x^(m-1))^(2^B)`` so ``x = (1 - (1-u)^(2^-B))^(1/(m-1))``.
    """
    inner = -np.expm1(np.log1p(-np.asarray(u)) * 2.0 ** (-b_total))
    return inner ** (1.0 / (m - 1))


def surrogate_quantize_batch(H: np.ndarray, b_total: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw RVQ-distributed codewords without enumerating the codebook.

    Returns ``(codewords, sin2)`` where ``codewords`` has the shape of ``H``
    and ``sin2`` holds the sampled squared errors.
    """
    gen = as_generator(rng)
    H = np.atleast_2d(np.asarray(H, dtype=np.complex128))
    n, m = H.shape
    if m < 2:
        raise DimensionError("surrogate quantization needs m >= 2")
    hd = H / np.linalg.norm(H, axis=1, keepdims=True)
    s = sample_min_sq_error(m, b_total, gen.random(n))
    g = complex_normal(gen, (n, m))
    g -= hd * np.sum(hd.conj() * g, axis=1, keepdims=True)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    c = np.sqrt(1.0 - s)[:, None] * hd + np.sqrt(s)[:, None] * g
    return c, s


def surrogate_quantize(h, b_total: float, rng) -> QuantizationReport:
    """Single-vector surrogate; the reported index is uniform (RVQ symmetry)."""
    gen = as_generator(rng)
    H = np.asarray(h, dtype=np.complex128)[None, :]
    if np.linalg.norm(H) == 0:
        raise ValueError("cannot quantize a zero channel")
    c, _ = surrogate_quantize_batch(H, b_total, gen)
    nbits = int(np.ceil(b_total))
    index = bits_to_int(gen.integers(0, 2, nbits)) if nbits > 0 else 0
    return QuantizationReport(index, ChannelVector(c[0]), float(squared_cdi_error(H[0], c[0])))


def random_isotropic(n: int, m: int, rng) -> np.ndarray:
    v = complex_normal(rng, (n, m))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_index_bits(n: int, nbits: int, rng) -> np.ndarray:
    return as_generator(rng).integers(0, 2, size=(n, nbits), dtype=np.uint8)


__all__ = [
    "B_MAX", "Codebook", "QuantizationReport", "InfeasibleEnumerationError",
    "codeword", "quantize", "quantize_batch", "exact_quant_mse", "quant_mse_bound",
    "surrogate_quantize", "surrogate_quantize_batch", "sample_min_sq_error",
    "bits_to_int", "int_to_bits", "index_bits", "random_isotropic", "sample_index_bits",
]
