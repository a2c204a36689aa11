"""Monte Carlo drivers for the classical and hybrid CSIT acquisition schemes.

Each SNR point is simulated in fixed-size chunks; chunk ``k`` of point ``i``
draws from ``RngStream(seed, (i, k))``, so results do not depend on the
number of workers or on the order in which chunks finish.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .. import fec
from ..channel import RngStream, complex_normal, squared_cdi_error
from ..estimation import unit_pilot, uplink_mmse
from ..joint import FeedbackFormat, run_joint
from ..modem import get_constellation
from ..outage import (
    InfeasibleSplitError,
    OutageDesign,
    classical_mse,
    db_to_linear,
    error_variance_for_cdi_mse,
    mse_bound,
    optimize_split,
    outage_prob,
)
from ..rvq import (
    B_MAX,
    Codebook,
    index_bits,
    quantize_batch,
    random_isotropic,
    sample_index_bits,
    surrogate_quantize_batch,
)
from .config import ExperimentConfig

log = logging.getLogger(__name__)

CHUNK_TRIALS = 2000
_CODEBOOK_STREAM = 0x5EED


@dataclass(frozen=True)
class TrialRecord:
    snr_db: float
    h: np.ndarray
    hhat_a: np.ndarray
    index: Optional[int]
    converged: bool
    iterations: int
    sq_cdi_error: float
    outage: bool


@dataclass
class TrialBatch:
    """Per-trial arrays for one chunk (or a concatenation of chunks)."""

    snr_db: float
    h: np.ndarray
    hhat_a: np.ndarray
    sq_error: np.ndarray
    outage: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    index_bits: Optional[np.ndarray] = None
    monotone: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.sq_error.size

    @classmethod
    def concat(cls, parts: list) -> "TrialBatch":
        def cat(name):
            vals = [getattr(p, name) for p in parts]
            return None if any(v is None for v in vals) else np.concatenate(vals)

        return cls(parts[0].snr_db, cat("h"), cat("hhat_a"), cat("sq_error"), cat("outage"),
                   cat("converged"), cat("iterations"), cat("index_bits"), cat("monotone"))

    def records(self) -> Iterator[TrialRecord]:
        for k in range(len(self)):
            idx = None
            if self.index_bits is not None and self.index_bits.shape[1] <= 62:
                idx = int("".join(map(str, self.index_bits[k])) or "0", 2)
            yield TrialRecord(self.snr_db, self.h[k], self.hhat_a[k], idx,
                              bool(self.converged[k]), int(self.iterations[k]),
                              float(self.sq_error[k]), bool(self.outage[k]))


@dataclass(frozen=True)
class CurvePoint:
    snr_db: float
    mse: float
    ci95: float
    t_a: int
    t_q: int
    b: float
    epsilon: float
    bound: float
    trials: int = 0
    outage_rate: float = 0.0
    mse_outage_as_one: float = float("nan")
    mean_iterations: float = float("nan")


@dataclass
class Curve:
    config: ExperimentConfig
    points: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


@dataclass(frozen=True)
class PointPlan:
    """Everything a worker needs to simulate one SNR point."""

    snr_db: float
    snr_index: int
    design: OutageDesign
    n_info: float  # index bits; real-valued only for the continuous scenario
    quantizer: str
    codebook_seed: int
    csir_var: float  # per-coefficient variance of the user's channel error


def _codebook_seed(seed: int, snr_index: int) -> int:
    gen = RngStream(seed, (snr_index, _CODEBOOK_STREAM)).generator
    return int(gen.integers(0, 2 ** 63))


def _csir_variance(cfg: ExperimentConfig, P: float) -> float:
    mode = cfg.csir.mode
    if mode == "perfect":
        return 0.0
    if mode == "tracking":
        target = classical_mse(P, cfg.t_fb, cfg.antennas) * 10.0 ** (cfg.csir.level_db / 10.0)
    else:
        target = 10.0 ** (cfg.csir.level_db / 10.0)
    return error_variance_for_cdi_mse(target, cfg.antennas)


def _design(cfg: ExperimentConfig, P: float) -> tuple[OutageDesign, float]:
    """Training/feedback split and the number of index bits ``B``."""
    m = cfg.antennas
    if cfg.scenario == "classical":
        mse = classical_mse(P, cfg.t_fb, m)
        return OutageDesign(cfg.t_fb, 0, 0.0, 0.0, mse, P, m, mse), 0
    if cfg.scenario == "hybrid-continuous":
        fixed_b = None
    else:
        bps = get_constellation(cfg.constellation).bits_per_symbol
        fixed_b = bps * float(fec.get_code(cfg.code).effective_rate) if cfg.scenario == "hybrid-coded" else bps
    if cfg.t_q is not None:
        if fixed_b is None:
            raise InfeasibleSplitError("a T_q override needs a fixed feedback rate")
        t_a = cfg.t_fb - cfg.t_q
        eps = outage_prob(P, t_a, fixed_b, m)
        design = OutageDesign(t_a, cfg.t_q, float(fixed_b), eps,
                              mse_bound(fixed_b, cfg.t_q, eps, m), P, m,
                              classical_mse(P, cfg.t_fb, m))
    else:
        design = optimize_split(P, cfg.t_fb, m, fixed_b=fixed_b)
    if design.t_q < 1:
        raise InfeasibleSplitError(f"design leaves no feedback symbols (T_q={design.t_q})")

    if cfg.scenario == "hybrid-continuous":
        return design, design.b * design.t_q
    if cfg.scenario == "hybrid-coded":
        code = fec.get_code(cfg.code)
        bps = get_constellation(cfg.constellation).bits_per_symbol
        raw = design.b * design.t_q
        n_info = math.floor(raw + 1e-9) if cfg.bits_rounding == "floor" else math.ceil(raw - 1e-9)
        n_info = min(n_info, fec.max_info_bits(code, bps * design.t_q))
        if n_info < 1:
            raise InfeasibleSplitError("coded feedback block cannot carry any index bits")
        # report the bound for the bits actually carried
        design = OutageDesign(design.t_a, design.t_q, design.b, design.epsilon,
                              2.0 ** (-n_info / (m - 1)) + design.epsilon,
                              P, m, design.classical_mse)
        return design, n_info
    return design, int(round(design.b * design.t_q))


def plan_point(cfg: ExperimentConfig, snr_index: int) -> PointPlan:
    snr_db = cfg.snr_db[snr_index]
    P = db_to_linear(snr_db)
    design, n_info = _design(cfg, P)
    if cfg.scenario in ("classical", "hybrid-continuous"):
        quantizer = "surrogate" if cfg.scenario == "hybrid-continuous" else "none"
        if cfg.scenario == "hybrid-continuous" and cfg.quantizer == "explicit":
            raise InfeasibleSplitError("the continuous-rate scenario needs the surrogate quantizer")
    elif cfg.quantizer == "auto":
        quantizer = "explicit" if n_info <= B_MAX else "surrogate"
    else:
        quantizer = cfg.quantizer
    if quantizer == "explicit" and n_info > B_MAX:
        raise InfeasibleSplitError(f"explicit codebook of {n_info} bits exceeds {B_MAX}")
    csir = _csir_variance(cfg, P) if cfg.scenario != "classical" else 0.0
    return PointPlan(snr_db, snr_index, design, n_info, quantizer,
                     _codebook_seed(cfg.seed, snr_index), csir)


def _chunk_sizes(trials: int) -> list:
    full, rest = divmod(trials, CHUNK_TRIALS)
    return [CHUNK_TRIALS] * full + ([rest] if rest else [])


def _user_view(h: np.ndarray, var: float, gen) -> np.ndarray:
    # drawn even for perfect CSIR so that runs differing only in CSIR share
    # every other random draw (paired comparison)
    e = complex_normal(gen, h.shape)
    return h + math.sqrt(var) * e if var > 0.0 else h


def simulate_chunk(cfg: ExperimentConfig, plan: PointPlan, chunk_index: int, n: int) -> TrialBatch:
    """Simulate ``n`` independent trials of one SNR point."""
    gen = RngStream(cfg.seed, (plan.snr_index, chunk_index)).generator
    m = cfg.antennas
    d = plan.design
    P = d.P
    sqP = math.sqrt(P)
    h = complex_normal(gen, (n, m))
    x_a = unit_pilot(d.t_a)
    Y_a = sqP * h[:, :, None] * x_a + complex_normal(gen, (n, m, d.t_a))
    ones = np.ones(n, dtype=bool)

    if cfg.scenario == "classical":
        hhat, _ = uplink_mmse(Y_a, x_a, P)
        err = squared_cdi_error(h, hhat)
        return TrialBatch(plan.snr_db, h, hhat, err, ~ones, ones, np.zeros(n, dtype=np.int64))

    h_user = _user_view(h, plan.csir_var, gen)

    if cfg.scenario == "hybrid-continuous":
        hhat, mse_a = uplink_mmse(Y_a, x_a, P)
        snr_eff = P * np.sum(np.abs(hhat) ** 2, axis=1) / (P * mse_a + 1.0)
        outage = np.log2(1.0 + snr_eff) < d.b
        cw, _ = surrogate_quantize_batch(h_user, plan.n_info, gen)
        wrong = random_isotropic(n, m, gen)
        est = np.where(outage[:, None], wrong, cw)
        err = squared_cdi_error(h, est)
        return TrialBatch(plan.snr_db, h, hhat, err, outage, ones, np.zeros(n, dtype=np.int64))

    # fixed-constellation and coded feedback
    B = int(plan.n_info)
    c = get_constellation(cfg.constellation)
    code = fec.get_code(cfg.code) if cfg.scenario == "hybrid-coded" else None
    fmt = FeedbackFormat(c, d.t_q, B, code)
    cb = Codebook(m, B, seed=plan.codebook_seed,
                  mode="explicit" if plan.quantizer == "explicit" else "lazy")
    if plan.quantizer == "explicit":
        idx, _ = quantize_batch(cb, h_user)
        sent = index_bits(idx, B)
        true_cw = None
    else:
        sent = sample_index_bits(n, B, gen)
        true_cw, _ = surrogate_quantize_batch(h_user, B, gen)
    x_q = fmt.symbols(sent)
    Y_q = sqP * h[:, :, None] * x_q[:, None, :] + complex_normal(gen, (n, m, d.t_q))
    out = run_joint(Y_a, x_a, Y_q, P, fmt, cfg.detector, cfg.algorithm, cfg.max_iter)
    outage = np.any(out.bits != sent, axis=1)
    est = cb.codewords_from_bits(out.bits)
    if true_cw is not None:
        est = np.where(outage[:, None], est, true_cw)
    err = squared_cdi_error(h, est)
    steps = np.diff(out.residuals, axis=1)
    monotone = ~np.any(steps > 0, axis=1)  # NaN comparisons are False
    return TrialBatch(plan.snr_db, h, out.hhat_a, err, outage, out.converged, out.iterations,
                      out.bits, monotone)


def _run_chunk(args):
    cfg, plan, k, n = args
    return simulate_chunk(cfg, plan, k, n)


def simulate_point(cfg: ExperimentConfig, snr_index: int,
                   executor: Optional[ProcessPoolExecutor] = None) -> tuple[PointPlan, TrialBatch]:
    plan = plan_point(cfg, snr_index)
    jobs = [(cfg, plan, k, n) for k, n in enumerate(_chunk_sizes(cfg.trials))]
    mapper = executor.map if executor is not None else map
    return plan, TrialBatch.concat(list(mapper(_run_chunk, jobs)))


def summarize(plan: PointPlan, batch: TrialBatch) -> CurvePoint:
    err = batch.sq_error
    n = err.size
    ci = 1.96 * float(np.std(err, ddof=1)) / math.sqrt(n) if n > 1 else float("nan")
    d = plan.design
    pessimistic = np.where(batch.outage, 1.0, err)
    return CurvePoint(
        snr_db=plan.snr_db, mse=float(np.mean(err)), ci95=ci,
        t_a=d.t_a, t_q=d.t_q, b=float(d.b), epsilon=float(d.epsilon),
        bound=float(d.predicted_mse), trials=n,
        outage_rate=float(np.mean(batch.outage)),
        mse_outage_as_one=float(np.mean(pessimistic)),
        mean_iterations=float(np.mean(batch.iterations)),
    )


def run_experiment(cfg: ExperimentConfig) -> Curve:
    """Simulate every SNR point of ``cfg``; infeasible points are skipped."""
    curve = Curve(cfg)
    executor = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for i, snr in enumerate(cfg.snr_db):
            try:
                plan, batch = simulate_point(cfg, i, executor)
            except InfeasibleSplitError as exc:
                log.warning("skipping %s dB: %s", snr, exc)
                curve.skipped.append((snr, str(exc)))
                continue
            curve.points.append(summarize(plan, batch))
    finally:
        if executor is not None:
            executor.shutdown()
    return curve


def run_classical(cfg: ExperimentConfig) -> Curve:
    if cfg.scenario != "classical":
        raise ValueError("run_classical needs scenario='classical'")
    return run_experiment(cfg)


def run_hybrid(cfg: ExperimentConfig) -> Curve:
    if cfg.scenario not in ("hybrid-continuous", "hybrid-fixed", "hybrid-coded"):
        raise ValueError(f"run_hybrid cannot run scenario {cfg.scenario!r}")
    return run_experiment(cfg)


def run_imperfect_csir(cfg: ExperimentConfig) -> Curve:
    if cfg.scenario != "imperfect-csir":
        raise ValueError("run_imperfect_csir needs scenario='imperfect-csir'")
    return run_experiment(cfg)
