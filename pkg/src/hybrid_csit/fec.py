"""Convolutional encoding, puncturing and hard-decision Viterbi decoding.

Generator polynomials are octal, one row per encoder input and one column
per output. For an input with constraint length ``K`` the ``K``-bit binary
expansion of each generator is read MSB first: the MSB taps the current
input bit and the LSB taps the bit entered ``K - 1`` steps earlier. Output
``j`` XORs the contributions of every input. For the rate-2/3 preset
``[4 5 17; 7 4 2]`` this gives constraint lengths ``(4, 3)``::

    out0 = u0[t-1]                         ^ u1[t] ^ u1[t-1] ^ u1[t-2]
    out1 = u0[t-1] ^ u0[t-3]               ^ u1[t]
    out2 = u0[t] ^ u0[t-1] ^ u0[t-2] ^ u0[t-3] ^ u1[t-1]

Info bits are consumed ``k`` at a time (input 0 first) and each step emits
``n`` bits (output 0 first). Blocks are tail-terminated with ``max(K) - 1``
all-zero input steps. Puncture masks are applied cyclically to the
serialised mother-code stream; punctured positions are re-inserted as
erasures (``-1``) before decoding and contribute nothing to the metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

ERASURE = -1


class FramingError(ValueError):
    """Received stream length is inconsistent with the trellis."""


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class CodeConfig:
    name: str
    generators: tuple  # rows = inputs, columns = outputs, octal values
    constraint_lengths: tuple
    traceback: int
    puncture: Optional[tuple] = None

    def __post_init__(self):
        if len(self.generators) != len(self.constraint_lengths):
            raise ValueError("one constraint length per generator row is required")
        widths = {len(row) for row in self.generators}
        if len(widths) != 1:
            raise ValueError("generator rows must have equal length")
        for row, K in zip(self.generators, self.constraint_lengths):
            if any(g >= (1 << K) for g in row):
                raise ValueError(f"generator in {row} needs more than K={K} taps")
        if self.puncture is not None and (not any(self.puncture) or set(self.puncture) - {0, 1}):
            raise ValueError("puncture mask must be 0/1 with at least one kept bit")

    @property
    def k(self) -> int:
        return len(self.generators)

    @property
    def n(self) -> int:
        return len(self.generators[0])

    @property
    def memory(self) -> tuple:
        return tuple(K - 1 for K in self.constraint_lengths)

    @property
    def tail_steps(self) -> int:
        return max(self.memory)

    @property
    def n_states(self) -> int:
        return 1 << sum(self.memory)

    @property
    def base_rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    @property
    def effective_rate(self) -> Fraction:
        if self.puncture is None:
            return self.base_rate
        kept = Fraction(sum(self.puncture), len(self.puncture))
        return self.base_rate / kept

    @cached_property
    def trellis(self):
        """``(next_state, out_bits)`` tables indexed ``[state, input]``."""
        mem = self.memory
        S, U = self.n_states, 1 << self.k
        next_state = np.zeros((S, U), dtype=np.int64)
        out_bits = np.zeros((S, U, self.n), dtype=np.int8)
        for s in range(S):
            regs, shift = [], 0
            for m in reversed(mem):
                regs.append((s >> shift) & ((1 << m) - 1))
                shift += m
            regs.reverse()  # regs[i]: past bits of input i, newest at MSB
            for u in range(U):
                bits_in = [(u >> (self.k - 1 - i)) & 1 for i in range(self.k)]
                full = [(bits_in[i] << mem[i]) | regs[i] for i in range(self.k)]
                for j in range(self.n):
                    acc = 0
                    for i in range(self.k):
                        acc ^= _parity(self.generators[i][j] & full[i])
                    out_bits[s, u, j] = acc
                ns = 0
                for i in range(self.k):
                    ns = (ns << mem[i]) | (full[i] >> 1)
                next_state[s, u] = ns
        return next_state, out_bits

    @cached_property
    def predecessors(self):
        """``(pred_state, pred_input)`` arrays of shape ``(S, 2**k)``."""
        next_state, _ = self.trellis
        S, U = next_state.shape
        pred_state = np.zeros((S, U), dtype=np.int64)
        pred_input = np.zeros((S, U), dtype=np.int64)
        fill = np.zeros(S, dtype=np.int64)
        for s in range(S):
            for u in range(U):
                ns = next_state[s, u]
                pred_state[ns, fill[ns]] = s
                pred_input[ns, fill[ns]] = u
                fill[ns] += 1
        if np.any(fill != U):
            raise ValueError(f"code {self.name!r} does not have a regular trellis")
        return pred_state, pred_input

    def steps_for(self, n_info: int) -> int:
        return -(-n_info // self.k) + self.tail_steps

    def mother_length(self, n_info: int) -> int:
        return self.steps_for(n_info) * self.n

    def keep_mask(self, n_info: int) -> np.ndarray:
        L = self.mother_length(n_info)
        if self.puncture is None:
            return np.ones(L, dtype=bool)
        pat = np.asarray(self.puncture, dtype=bool)
        return np.resize(pat, L)

    def coded_length(self, n_info: int) -> int:
        return int(self.keep_mask(n_info).sum())


R12 = CodeConfig("r12", ((0o171, 0o133),), (7,), traceback=30)
R23 = CodeConfig("r23", ((0o4, 0o5, 0o17), (0o7, 0o4, 0o2)), (4, 3), traceback=20)
R34 = CodeConfig("r34", ((0o171, 0o133),), (7,), traceback=30, puncture=(1, 1, 1, 0, 0, 1))

PRESETS = {"r12": R12, "r23": R23, "r34": R34}


def get_code(name: str) -> CodeConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown code preset {name!r}") from None


def encode(cfg: CodeConfig, info_bits) -> np.ndarray:
    """Tail-terminated, punctured codeword(s) for info bits on the last axis."""
    info = np.asarray(info_bits, dtype=np.int64)
    if info.shape[-1] < 1:
        raise ValueError("at least one info bit is required")
    batch = info.shape[:-1]
    info2 = info.reshape(-1, info.shape[-1])
    n_info = info2.shape[1]
    steps = cfg.steps_for(n_info)
    padded = np.zeros((info2.shape[0], steps * cfg.k), dtype=np.int64)
    padded[:, :n_info] = info2
    inputs = padded.reshape(-1, steps, cfg.k) @ (1 << np.arange(cfg.k - 1, -1, -1))
    next_state, out_bits = cfg.trellis
    state = np.zeros(info2.shape[0], dtype=np.int64)
    out = np.empty((info2.shape[0], steps, cfg.n), dtype=np.int8)
    for t in range(steps):
        u = inputs[:, t]
        out[:, t] = out_bits[state, u]
        state = next_state[state, u]
    coded = out.reshape(info2.shape[0], -1)[:, cfg.keep_mask(n_info)]
    return coded.reshape(batch + (coded.shape[1],)).astype(np.uint8)


def depuncture(cfg: CodeConfig, received, n_info: int) -> np.ndarray:
    """Re-insert erasures at punctured positions (mother-code length)."""
    r = np.asarray(received, dtype=np.int8)
    mask = cfg.keep_mask(n_info)
    if r.shape[-1] != mask.sum():
        raise FramingError(
            f"expected {int(mask.sum())} received bits for {n_info} info bits, got {r.shape[-1]}"
        )
    full = np.full(r.shape[:-1] + (mask.size,), ERASURE, dtype=np.int8)
    full[..., mask] = r
    return full


def viterbi_decode(cfg: CodeConfig, hard_bits, n_info: Optional[int] = None) -> np.ndarray:
    """Hard-decision Viterbi decoding of a depunctured mother-code stream.

    ``hard_bits`` holds 0/1 values with ``-1`` at erased positions, on the
    last axis (leading axes are decoded independently). The Hamming metric
    ignores erasures. The decision for step ``d`` is taken by tracing back
    from the best state at step ``d + traceback``; decisions within the last
    ``traceback`` steps trace back from the terminating all-zero state.
    Returns ``(steps - tail) * k`` info bits, or the first ``n_info``.
    """
    r = np.asarray(hard_bits, dtype=np.int8)
    batch = r.shape[:-1]
    L = r.shape[-1]
    if L % cfg.n:
        raise FramingError(f"stream length {L} is not a multiple of n={cfg.n}")
    steps = L // cfg.n
    if steps <= cfg.tail_steps:
        raise FramingError(f"stream of {steps} steps is shorter than the tail")
    if n_info is not None and cfg.steps_for(n_info) != steps:
        raise FramingError(f"{n_info} info bits need {cfg.steps_for(n_info)} steps, got {steps}")
    r2 = r.reshape(-1, steps, cfg.n)
    N = r2.shape[0]
    S = cfg.n_states
    _, out_bits = cfg.trellis
    pred_state, pred_input = cfg.predecessors
    # expected output bits on each incoming branch: (S, P, n)
    branch_out = out_bits[pred_state, pred_input].astype(np.int16)
    valid = (r2 >= 0)

    big = np.iinfo(np.int32).max // 4
    metric = np.full((N, S), big, dtype=np.int32)
    metric[:, 0] = 0
    metrics = np.empty((steps + 1, N, S), dtype=np.int32)
    metrics[0] = metric
    decisions = np.empty((steps, N, S), dtype=np.int8)
    for t in range(steps):
        rt = r2[:, t, :].astype(np.int16)
        vt = valid[:, t, :]
        # mismatch count per (N, S, P)
        diff = (rt[:, None, None, :] != branch_out[None]) & vt[:, None, None, :]
        bm = diff.sum(axis=-1, dtype=np.int32)
        cand = metric[:, pred_state] + bm
        p = np.argmin(cand, axis=-1)
        metric = np.take_along_axis(cand, p[..., None], axis=-1)[..., 0]
        metric = np.minimum(metric, big)
        decisions[t] = p
        metrics[t + 1] = metric

    tb = max(1, int(cfg.traceback))
    rows = np.arange(N)
    inputs = np.empty((N, steps), dtype=np.int64)

    def trace(state, t_end, t_stop):
        # walk survivors from time t_end down to t_stop, returning the input
        # decided on each step in [t_stop, t_end)
        got = {}
        s = state
        for t in range(t_end - 1, t_stop - 1, -1):
            p = decisions[t, rows, s]
            got[t] = pred_input[s, p]
            s = pred_state[s, p]
        return got

    last_window_start = max(0, steps - tb)
    for d in range(last_window_start):
        t_end = d + tb
        s = np.argmin(metrics[t_end], axis=1)
        for t in range(t_end - 1, d, -1):
            p = decisions[t, rows, s]
            s = pred_state[s, p]
        p = decisions[d, rows, s]
        inputs[:, d] = pred_input[s, p]
    tail = trace(np.zeros(N, dtype=np.int64), steps, last_window_start)
    for t, u in tail.items():
        inputs[:, t] = u

    shifts = np.arange(cfg.k - 1, -1, -1)
    bits = ((inputs[:, :, None] >> shifts) & 1).reshape(N, steps * cfg.k)
    bits = bits[:, : (steps - cfg.tail_steps) * cfg.k]
    if n_info is not None:
        bits = bits[:, :n_info]
    return bits.reshape(batch + (bits.shape[1],)).astype(np.uint8)


def decode(cfg: CodeConfig, received, n_info: int) -> np.ndarray:
    """Depuncture then Viterbi-decode a received (punctured) block."""
    return viterbi_decode(cfg, depuncture(cfg, received, n_info), n_info)


def max_info_bits(cfg: CodeConfig, budget: int) -> int:
    """Largest info length whose terminated, punctured codeword fits ``budget``."""
    best = 0
    n_info = 1
    while cfg.coded_length(n_info) <= budget:
        best = n_info
        n_info += 1
    return best


__all__: Sequence[str] = [
    "CodeConfig", "R12", "R23", "R34", "PRESETS", "FramingError", "get_code",
    "encode", "depuncture", "viterbi_decode", "decode", "max_info_bits", "ERASURE",
]
