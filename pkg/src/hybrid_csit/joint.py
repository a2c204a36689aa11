"""Joint channel estimation and feedback detection.

The base station observes a pilot block ``Y_a = sqrt(P) h x_a + N_a`` and a
feedback block ``Y_q = sqrt(P) h x_q + N_q`` where ``x_q`` carries the
user's codebook index. Three receivers are provided: single-shot
(pilot-only estimate, one detection), and the iterative estimator/detector
with either ML enumeration or LS projection plus hard decisions. All batch
routines take arrays with a leading trial axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fec
from .channel import ChannelVector, DimensionError
from .estimation import uplink_ls
from .modem import Constellation, hard_detect, map_bits
from .rvq import B_MAX, Codebook, InfeasibleEnumerationError, bits_to_int, index_bits

FIXED_POINT_TOL = 1e-12
DEFAULT_MAX_ITER = 10
_ML_CHUNK = 1 << 14


class UndefinedProjectionError(ValueError):
    """LS detection with an all-zero channel estimate."""


@dataclass(frozen=True, eq=False)
class FeedbackFormat:
    """How ``n_info`` index bits are carried on ``t_q`` feedback symbols.

    Uncoded: the index bits, zero-filled to ``b * t_q``, are mapped
    directly. Coded: the bits are convolutionally encoded (terminated and
    punctured) and the codeword is zero-filled to ``b * t_q``.
    """

    constellation: Constellation
    t_q: int
    n_info: int
    code: Optional[fec.CodeConfig] = None

    def __post_init__(self):
        if self.t_q < 1 or self.n_info < 0:
            raise DimensionError(f"invalid format t_q={self.t_q}, n_info={self.n_info}")
        if self.used_bits > self.capacity:
            raise ValueError(
                f"{self.used_bits} channel bits do not fit in {self.t_q} symbols "
                f"of {self.constellation.name}"
            )

    @property
    def capacity(self) -> int:
        return self.constellation.bits_per_symbol * self.t_q

    @property
    def used_bits(self) -> int:
        if self.code is None:
            return self.n_info
        return self.code.coded_length(self.n_info) if self.n_info > 0 else 0

    def channel_bits(self, info: np.ndarray) -> np.ndarray:
        info = np.asarray(info, dtype=np.uint8).reshape(-1, self.n_info)
        out = np.zeros((info.shape[0], self.capacity), dtype=np.uint8)
        if self.n_info == 0:
            return out
        if self.code is None:
            out[:, : self.n_info] = info
        else:
            out[:, : self.used_bits] = fec.encode(self.code, info)
        return out

    def symbols(self, info: np.ndarray) -> np.ndarray:
        return map_bits(self.constellation, self.channel_bits(info))

    def decide(self, soft: np.ndarray) -> np.ndarray:
        """Index bits from soft symbol estimates ``(n, t_q)``."""
        hard, _ = hard_detect(self.constellation, soft)
        hard = hard.reshape(-1, self.capacity)
        if self.n_info == 0:
            return np.zeros((hard.shape[0], 0), dtype=np.uint8)
        if self.code is None:
            return hard[:, : self.n_info].astype(np.uint8)
        return fec.decode(self.code, hard[:, : self.used_bits], self.n_info)

    def candidates(self) -> np.ndarray:
        """Symbol sequences of every index, ``(2**n_info, t_q)``."""
        if self.code is not None:
            raise NotImplementedError("ML enumeration is not supported for coded feedback")
        if self.n_info > B_MAX:
            raise InfeasibleEnumerationError(
                f"cannot enumerate 2**{self.n_info} feedback candidates (limit 2**{B_MAX})"
            )
        idx = np.arange(1 << self.n_info)
        return self.symbols(index_bits(idx, self.n_info))


def descent_residual(hhat, x_ext, Y_ext, P: float):
    """Frobenius residual ``||Y_ext - sqrt(P) hhat x_ext||^2``.

    Shapes ``(..., M)``, ``(..., T)`` and ``(..., M, T)``.
    """
    h = np.asarray(hhat)
    x = np.asarray(x_ext)
    Y = np.asarray(Y_ext)
    if Y.shape[-2] != h.shape[-1] or Y.shape[-1] != x.shape[-1]:
        raise DimensionError(f"shapes {h.shape}, {x.shape}, {Y.shape} are not conformable")
    R = Y - np.sqrt(P) * h[..., :, None] * x[..., None, :]
    out = np.sum(np.abs(R) ** 2, axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def _ls_soft(hhat: np.ndarray, Y_q: np.ndarray, P: float) -> np.ndarray:
    energy = np.sum(np.abs(hhat) ** 2, axis=-1)
    if np.any(energy == 0):
        raise UndefinedProjectionError("LS detection needs a nonzero channel estimate")
    z = np.einsum("...m,...mt->...t", np.conj(hhat), Y_q)
    return z / (energy[..., None] * np.sqrt(P))


def ml_indices(hhat: np.ndarray, Y_q: np.ndarray, fmt: FeedbackFormat, P: float) -> np.ndarray:
    """Batch ML enumeration; returns the index minimising the residual."""
    h = np.atleast_2d(hhat)
    Y = np.asarray(Y_q).reshape(h.shape[0], h.shape[1], -1)
    cands = fmt.candidates()
    z = np.einsum("nm,nmt->nt", np.conj(h), Y)
    energy = np.sum(np.abs(h) ** 2, axis=1)
    # ||Y - sqrt(P) h x||^2 = ||Y||^2 + P |h|^2 |x|^2 - 2 sqrt(P) Re(sum_t conj(x_t) z_t)
    best = np.full(h.shape[0], np.inf)
    best_idx = np.zeros(h.shape[0], dtype=np.int64)
    for start in range(0, cands.shape[0], _ML_CHUNK):
        X = cands[start:start + _ML_CHUNK]
        xe = np.sum(np.abs(X) ** 2, axis=1)
        score = P * energy[:, None] * xe[None, :] - 2 * np.sqrt(P) * np.real(z @ np.conj(X).T)
        k = np.argmin(score, axis=1)
        s = score[np.arange(h.shape[0]), k]
        better = s < best
        best[better] = s[better]
        best_idx[better] = k[better] + start
    return best_idx


def detect_ml(hhat, Y_q, cb: Codebook, c: Constellation, P: float):
    """ML feedback detection by enumerating all ``2**B`` codebook indices."""
    if not cb.enumerable:
        raise InfeasibleEnumerationError(f"{cb.bits}-bit codebook cannot be enumerated")
    Y = np.asarray(Y_q)
    fmt = FeedbackFormat(c, Y.shape[-1], cb.bits)
    idx = ml_indices(np.asarray(hhat), Y, fmt, P)
    return int(idx[0]) if np.ndim(hhat) == 1 else idx


def detect_ls(hhat, Y_q, c: Constellation, P: float) -> np.ndarray:
    """LS projection ``(h^H h)^-1 h^H Y_q / sqrt(P)`` then per-symbol hard bits."""
    soft = _ls_soft(np.asarray(hhat), np.asarray(Y_q), P)
    bits, _ = hard_detect(c, soft)
    return bits


def _detect_bits(h, Y_q, fmt: FeedbackFormat, P: float, detector: str) -> np.ndarray:
    if detector == "ml":
        return index_bits(ml_indices(h, Y_q, fmt, P), fmt.n_info)
    if detector == "ls":
        return fmt.decide(_ls_soft(h, Y_q, P))
    raise ValueError(f"unknown detector {detector!r}")


@dataclass
class JointBatch:
    """Per-trial outputs of a batch run (arrays share the trial axis)."""

    bits: np.ndarray  # (n, B) detected index bits
    hhat_pilot: np.ndarray  # (n, M) pilot-only LS estimate
    hhat_a: np.ndarray  # (n, M) last channel iterate
    iterations: np.ndarray  # (n,)
    converged: np.ndarray  # (n,) bool
    residuals: np.ndarray  # (n, max_iter), NaN after termination


def run_joint(Y_a, x_a, Y_q, P: float, fmt: FeedbackFormat, detector: str = "ls",
              algorithm: str = "iterative", max_iter: int = DEFAULT_MAX_ITER) -> JointBatch:
    """Run single-shot or iterative estimation/detection on a batch.

    ``Y_a``: ``(n, M, T_a)``; ``x_a``: ``(T_a,)``; ``Y_q``: ``(n, M, T_q)``.
    The iterative receiver stops a trial once both the detected index and
    the channel iterate repeat, or after ``max_iter`` iterations.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if detector == "ml" and fmt.code is not None:
        raise NotImplementedError("ML detection is disabled for coded feedback")
    Y_a = np.asarray(Y_a)
    Y_q = np.asarray(Y_q)
    x_a = np.asarray(x_a, dtype=np.complex128)
    n = Y_a.shape[0]
    h0 = uplink_ls(Y_a, x_a, P)

    if algorithm == "single":
        bits = _detect_bits(h0, Y_q, fmt, P, detector)
        x_ext = np.concatenate([np.broadcast_to(x_a, (n, x_a.size)), fmt.symbols(bits)], axis=1)
        Y_ext = np.concatenate([Y_a, Y_q], axis=2)
        res = np.full((n, 1), np.nan)
        res[:, 0] = descent_residual(h0, x_ext, Y_ext, P)
        return JointBatch(bits, h0, h0.copy(), np.ones(n, dtype=np.int64),
                          np.ones(n, dtype=bool), res)
    if algorithm != "iterative":
        raise ValueError(f"unknown algorithm {algorithm!r}")

    Y_ext_all = np.concatenate([Y_a, Y_q], axis=2)
    h_prev = h0.copy()
    bits_prev = np.zeros((n, fmt.n_info), dtype=np.uint8)
    out_bits = np.zeros_like(bits_prev)
    iters = np.zeros(n, dtype=np.int64)
    conv = np.zeros(n, dtype=bool)
    res = np.full((n, max_iter), np.nan)
    active = np.arange(n)
    for i in range(1, max_iter + 1):
        hp = h_prev[active]
        bits = _detect_bits(hp, Y_q[active], fmt, P, detector)
        x_ext = np.concatenate(
            [np.broadcast_to(x_a, (active.size, x_a.size)), fmt.symbols(bits)], axis=1)
        Y_ext = Y_ext_all[active]
        h_new = uplink_ls(Y_ext, x_ext, P)
        res[active, i - 1] = descent_residual(h_new, x_ext, Y_ext, P)
        out_bits[active] = bits
        iters[active] = i
        if i > 1:
            same_bits = np.all(bits == bits_prev[active], axis=1)
            step = np.linalg.norm(h_new - hp, axis=1)
            done = same_bits & (step <= FIXED_POINT_TOL * np.maximum(1.0, np.linalg.norm(hp, axis=1)))
        else:
            done = np.zeros(active.size, dtype=bool)
        h_prev[active] = h_new
        bits_prev[active] = bits
        conv[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
    return JointBatch(out_bits, h0, h_prev, iters, conv, res)


# --- single-observation API -------------------------------------------------

@dataclass(frozen=True, eq=False)
class TwoPhaseObservation:
    Y_a: np.ndarray
    x_a: np.ndarray
    Y_q: np.ndarray
    P: float
    codebook: Codebook
    fmt: FeedbackFormat

    def __post_init__(self):
        Ya, Yq = np.asarray(self.Y_a), np.asarray(self.Y_q)
        if Ya.ndim != 2 or Yq.ndim != 2 or Ya.shape[0] != Yq.shape[0]:
            raise DimensionError("Y_a and Y_q must be M x T matrices with equal M")
        if Ya.shape[1] != np.asarray(self.x_a).size or Yq.shape[1] != self.fmt.t_q:
            raise DimensionError("observation lengths do not match the pilot/feedback format")
        if self.fmt.n_info != self.codebook.bits:
            raise ValueError("feedback format and codebook disagree on the index size")

    @property
    def t_fb(self) -> int:
        return np.asarray(self.Y_a).shape[1] + np.asarray(self.Y_q).shape[1]


@dataclass(frozen=True)
class JointResult:
    hhat_final: ChannelVector
    hhat_a: ChannelVector
    hhat_pilot: ChannelVector
    index: int
    iterations: int
    converged: bool
    residuals: tuple


def _single(obs: TwoPhaseObservation, detector: str, algorithm: str, max_iter: int) -> JointResult:
    out = run_joint(np.asarray(obs.Y_a)[None], obs.x_a, np.asarray(obs.Y_q)[None], obs.P,
                    obs.fmt, detector, algorithm, max_iter)
    bits = out.bits[:1]
    final = obs.codebook.codewords_from_bits(bits)[0]
    trace = out.residuals[0]
    return JointResult(
        hhat_final=ChannelVector(final),
        hhat_a=ChannelVector(out.hhat_a[0]),
        hhat_pilot=ChannelVector(out.hhat_pilot[0]),
        index=bits_to_int(bits[0]),
        iterations=int(out.iterations[0]),
        converged=bool(out.converged[0]),
        residuals=tuple(float(v) for v in trace[~np.isnan(trace)]),
    )


def single_shot(obs: TwoPhaseObservation, detector: str = "ls") -> JointResult:
    """Pilot-only LS estimate followed by a single detection pass."""
    return _single(obs, detector, "single", 1)


def iterative_ed(obs: TwoPhaseObservation, detector: str = "ml",
                 max_iter: int = DEFAULT_MAX_ITER) -> JointResult:
    """Alternate detection and extended-pilot re-estimation to a fixed point."""
    return _single(obs, detector, "iterative", max_iter)
