"""Joint channel estimation and feedback detection."""

import itertools

import numpy as np
import pytest

from hybrid_csit import fec
from hybrid_csit.channel import DimensionError, RngStream, complex_normal, squared_cdi_error
from hybrid_csit.estimation import unit_pilot
from hybrid_csit.joint import (
    FeedbackFormat,
    TwoPhaseObservation,
    UndefinedProjectionError,
    descent_residual,
    detect_ls,
    detect_ml,
    iterative_ed,
    run_joint,
    single_shot,
)
from hybrid_csit.modem import QAM16, QPSK
from hybrid_csit.rvq import Codebook, InfeasibleEnumerationError, index_bits, quantize


def _two_phase(gen, n, m, t_a, fmt, P, noise=1.0, bits=None):
    h = complex_normal(gen, (n, m))
    if bits is None:
        bits = gen.integers(0, 2, (n, fmt.n_info)).astype(np.uint8)
    x_a = unit_pilot(t_a)
    x_q = fmt.symbols(bits)
    Y_a = np.sqrt(P) * h[:, :, None] * x_a + noise * complex_normal(gen, (n, m, t_a))
    Y_q = np.sqrt(P) * h[:, :, None] * x_q[:, None, :] + noise * complex_normal(gen, (n, m, fmt.t_q))
    return h, bits, x_a, Y_a, Y_q


def _brute_force_ml(hhat, Y_q, fmt, P):
    best, arg = np.inf, -1
    for i, bits in enumerate(itertools.product([0, 1], repeat=fmt.n_info)):
        x = fmt.symbols(np.array(bits))[0]
        r = np.linalg.norm(Y_q - np.sqrt(P) * np.outer(hhat, x)) ** 2
        if r < best:
            best, arg = r, i
    return arg


class TestFeedbackFormat:
    def test_uncoded_zero_fill(self):
        fmt = FeedbackFormat(QAM16, 2, 5)
        ch = fmt.channel_bits(np.ones((1, 5)))
        np.testing.assert_array_equal(ch, [[1, 1, 1, 1, 1, 0, 0, 0]])

    def test_capacity_enforced(self):
        with pytest.raises(ValueError):
            FeedbackFormat(QPSK, 3, 7)
        with pytest.raises(ValueError):
            FeedbackFormat(QAM16, 5, 10, fec.R12)  # 32 coded bits > 20

    @pytest.mark.parametrize("code", [fec.R12, fec.R23, fec.R34], ids=lambda c: c.name)
    def test_coded_noiseless_round_trip(self, code, rng):
        B = fec.max_info_bits(code, 4 * 15)
        fmt = FeedbackFormat(QAM16, 15, B, code)
        bits = rng.integers(0, 2, (20, B))
        np.testing.assert_array_equal(fmt.decide(fmt.symbols(bits)), bits)

    def test_coded_corrects_symbol_error(self, rng):
        code = fec.R12
        B = fec.max_info_bits(code, 4 * 18)
        fmt = FeedbackFormat(QAM16, 18, B, code)
        bits = rng.integers(0, 2, (1, B))
        x = fmt.symbols(bits)
        x[0, 4] = -x[0, 4]  # one wrong symbol flips up to 2 coded bits
        np.testing.assert_array_equal(fmt.decide(x), bits)

    def test_candidates(self):
        fmt = FeedbackFormat(QPSK, 2, 3)
        c = fmt.candidates()
        assert c.shape == (8, 2)
        np.testing.assert_array_equal(c[5], fmt.symbols(np.array([[1, 0, 1]]))[0])

    def test_candidates_limits(self):
        with pytest.raises(NotImplementedError):
            FeedbackFormat(QPSK, 10, 4, fec.R12).candidates()
        with pytest.raises(InfeasibleEnumerationError):
            FeedbackFormat(QPSK, 11, 22).candidates()


class TestDetectML:
    def test_noiseless_exact(self, rng):
        cb = Codebook(4, 6, seed=1)
        fmt = FeedbackFormat(QPSK, 3, 6)
        h = complex_normal(rng, 4)
        j = 45
        Y = np.sqrt(5.0) * np.outer(h, fmt.symbols(index_bits(np.array([j]), 6))[0])
        assert detect_ml(h, Y, cb, QPSK, 5.0) == j

    def test_matches_brute_force(self):
        gen = RngStream(21).generator
        fmt = FeedbackFormat(QPSK, 3, 6)
        cb = Codebook(4, 6)
        for _ in range(1000):
            h = complex_normal(gen, 4)
            hhat = h + 0.7 * complex_normal(gen, 4)
            x = fmt.symbols(gen.integers(0, 2, 6))[0]
            Y = np.sqrt(2.0) * np.outer(h, x) + complex_normal(gen, (4, 3))
            assert detect_ml(hhat, Y, cb, QPSK, 2.0) == _brute_force_ml(hhat, Y, fmt, 2.0)

    def test_batched(self):
        gen = RngStream(2).generator
        fmt = FeedbackFormat(QPSK, 3, 6)
        h, bits, _, _, Y_q = _two_phase(gen, 50, 4, 5, fmt, 10.0)
        idx = detect_ml(h, Y_q, Codebook(4, 6), QPSK, 10.0)
        assert idx.shape == (50,)

    def test_corrupted_estimate_hurts(self):
        gen = RngStream(4).generator
        fmt = FeedbackFormat(QPSK, 3, 6)
        cb = Codebook(4, 6)
        P = 10.0
        h, bits, _, _, Y_q = _two_phase(gen, 4000, 4, 5, fmt, P)
        sent = bits @ (1 << np.arange(5, -1, -1))
        good = detect_ml(h + 0.05 * complex_normal(gen, h.shape), Y_q, cb, QPSK, P)
        bad = detect_ml(h + 1.5 * complex_normal(gen, h.shape), Y_q, cb, QPSK, P)
        assert np.mean(bad != sent) > 3 * np.mean(good != sent)

    def test_enumeration_limit(self):
        with pytest.raises(InfeasibleEnumerationError):
            detect_ml(np.ones(4), np.ones((4, 11)), Codebook(4, 22, mode="lazy"), QPSK, 1.0)


class TestDetectLS:
    @pytest.mark.parametrize("c", [QPSK, QAM16], ids=lambda c: c.name)
    def test_noiseless_exact(self, c, rng):
        h = complex_normal(rng, 4)
        bits = rng.integers(0, 2, 5 * c.bits_per_symbol)
        from hybrid_csit.modem import map_bits
        Y = np.sqrt(3.0) * np.outer(h, map_bits(c, bits))
        np.testing.assert_array_equal(detect_ls(h, Y, c, 3.0), bits)

    def test_agrees_with_ml(self):
        gen = RngStream(5).generator
        fmt = FeedbackFormat(QPSK, 3, 6)
        P = 100.0
        h, bits, x_a, Y_a, Y_q = _two_phase(gen, 5000, 4, 10, fmt, P)
        from hybrid_csit.estimation import uplink_ls
        hhat = uplink_ls(Y_a, x_a, P)
        ml = detect_ml(hhat, Y_q, Codebook(4, 6), QPSK, P)
        ls = detect_ls(hhat, Y_q, QPSK, P) @ (1 << np.arange(5, -1, -1))
        assert np.mean(ml == ls) >= 0.99

    def test_qpsk_scale_invariance(self, rng):
        h = complex_normal(rng, (200, 4))
        Y = complex_normal(rng, (200, 4, 6))
        base = detect_ls(h, Y, QPSK, 2.0)
        for a in (1e-3, 0.5, 7.0):
            np.testing.assert_array_equal(detect_ls(a * h, Y, QPSK, 2.0), base)

    def test_qam16_amplitude_matters(self, rng):
        # LS projection rescales the soft symbols, so amplitude levels move
        h = complex_normal(rng, 4)
        Y = np.outer(h, [3 / np.sqrt(10)])
        assert not np.array_equal(detect_ls(h, Y, QAM16, 1.0), detect_ls(3 * h, Y, QAM16, 1.0))

    def test_zero_estimate(self):
        with pytest.raises(UndefinedProjectionError):
            detect_ls(np.zeros(4), np.ones((4, 2)), QPSK, 1.0)


class TestResidual:
    def test_exact_model_zero(self, rng):
        h = complex_normal(rng, 4)
        x = complex_normal(rng, 7)
        assert descent_residual(h, x, np.sqrt(3.0) * np.outer(h, x), 3.0) == pytest.approx(0, abs=1e-24)

    def test_block_additivity(self, rng):
        h = complex_normal(rng, 4)
        xa, xq = complex_normal(rng, 3), complex_normal(rng, 5)
        Ya, Yq = complex_normal(rng, (4, 3)), complex_normal(rng, (4, 5))
        whole = descent_residual(h, np.r_[xa, xq], np.c_[Ya, Yq], 2.0)
        parts = descent_residual(h, xa, Ya, 2.0) + descent_residual(h, xq, Yq, 2.0)
        assert whole == pytest.approx(parts, rel=1e-10)

    def test_noise_scaling(self):
        gen = RngStream(6).generator
        h = complex_normal(gen, (20_000, 4))
        x = np.ones(5)
        clean = np.sqrt(2.0) * h[:, :, None] * x
        r1 = descent_residual(h, np.broadcast_to(x, (20_000, 5)), clean + complex_normal(gen, clean.shape), 2.0)
        r2 = descent_residual(h, np.broadcast_to(x, (20_000, 5)),
                              clean + np.sqrt(2) * complex_normal(gen, clean.shape), 2.0)
        assert r2.mean() / r1.mean() == pytest.approx(2.0, rel=0.02)

    def test_shape_check(self):
        with pytest.raises(DimensionError):
            descent_residual(np.ones(4), np.ones(3), np.ones((4, 2)), 1.0)


class TestJointAlgorithms:
    def _obs(self, gen, P, noise=1.0, c=QPSK, t_q=3, B=6, t_a=17):
        cb = Codebook(4, B, seed=3)
        fmt = FeedbackFormat(c, t_q, B)
        h = complex_normal(gen, 4)
        rep = quantize(cb, h)
        bits = index_bits(np.array([rep.index]), B)
        x_a = unit_pilot(t_a)
        Y_a = np.sqrt(P) * np.outer(h, x_a) + noise * complex_normal(gen, (4, t_a))
        Y_q = np.sqrt(P) * np.outer(h, fmt.symbols(bits)[0]) + noise * complex_normal(gen, (4, t_q))
        return h, rep, TwoPhaseObservation(Y_a, x_a, Y_q, P, cb, fmt)

    @pytest.mark.parametrize("detector", ["ml", "ls"])
    def test_noiseless_chain(self, detector):
        h, rep, obs = self._obs(RngStream(1).generator, 10.0, noise=0.0)
        for res in (single_shot(obs, detector), iterative_ed(obs, detector)):
            assert res.index == rep.index
            assert squared_cdi_error(h, res.hhat_final) == pytest.approx(rep.sq_error, abs=1e-12)
        res = iterative_ed(obs, detector)
        assert res.converged and res.iterations == 2
        assert res.residuals[-1] == pytest.approx(0.0, abs=1e-20)

    def test_single_is_first_iteration(self):
        gen = RngStream(8).generator
        fmt = FeedbackFormat(QAM16, 4, 16)
        _, _, x_a, Y_a, Y_q = _two_phase(gen, 3000, 4, 4, fmt, 30.0)
        one = run_joint(Y_a, x_a, Y_q, 30.0, fmt, "ls", "single")
        first = run_joint(Y_a, x_a, Y_q, 30.0, fmt, "ls", "iterative", max_iter=1)
        np.testing.assert_array_equal(one.bits, first.bits)

    @pytest.mark.parametrize("detector", ["ml", "ls"])
    def test_descent_and_convergence(self, detector):
        gen = RngStream(9).generator
        fmt = FeedbackFormat(QPSK, 3, 6)
        for snr in (10, 15, 20, 25):
            P = 10 ** (snr / 10)
            _, _, x_a, Y_a, Y_q = _two_phase(gen, 100_000, 4, 17, fmt, P)
            out = run_joint(Y_a, x_a, Y_q, P, fmt, detector)
            assert not np.any(np.diff(out.residuals, axis=1) > 0)
            assert np.mean(out.converged & (out.iterations <= 3)) >= 0.9999

    def test_ml_equals_ls_uncoded(self):
        gen = RngStream(10).generator
        fmt = FeedbackFormat(QAM16, 2, 8)
        _, _, x_a, Y_a, Y_q = _two_phase(gen, 5000, 4, 3, fmt, 10.0)
        ml = run_joint(Y_a, x_a, Y_q, 10.0, fmt, "ml")
        ls = run_joint(Y_a, x_a, Y_q, 10.0, fmt, "ls")
        np.testing.assert_array_equal(ml.bits, ls.bits)

    def test_iterating_helps(self):
        gen = RngStream(11).generator
        fmt = FeedbackFormat(QAM16, 16, 64)
        P = 100.0
        _, bits, x_a, Y_a, Y_q = _two_phase(gen, 20_000, 4, 4, fmt, P)
        one = run_joint(Y_a, x_a, Y_q, P, fmt, "ls", "single")
        it = run_joint(Y_a, x_a, Y_q, P, fmt, "ls", "iterative")
        err_one = np.mean(np.any(one.bits != bits, axis=1))
        err_it = np.mean(np.any(it.bits != bits, axis=1))
        assert err_it < err_one

    def test_coded_ml_rejected(self):
        fmt = FeedbackFormat(QAM16, 8, 10, fec.R12)
        with pytest.raises(NotImplementedError):
            run_joint(np.ones((1, 4, 2)), np.ones(2), np.ones((1, 4, 8)), 1.0, fmt, "ml")

    def test_bad_options(self):
        fmt = FeedbackFormat(QPSK, 1, 2)
        args = (np.ones((1, 4, 2)), np.ones(2), np.ones((1, 4, 1)), 1.0, fmt)
        with pytest.raises(ValueError):
            run_joint(*args, detector="zf")
        with pytest.raises(ValueError):
            run_joint(*args, algorithm="turbo")
        with pytest.raises(ValueError):
            run_joint(*args, max_iter=0)

    def test_observation_validation(self):
        cb = Codebook(4, 6)
        fmt = FeedbackFormat(QPSK, 3, 6)
        with pytest.raises(DimensionError):
            TwoPhaseObservation(np.ones((4, 2)), np.ones(3), np.ones((4, 3)), 1.0, cb, fmt)
        with pytest.raises(ValueError):
            TwoPhaseObservation(np.ones((4, 2)), np.ones(2), np.ones((4, 3)), 1.0, Codebook(4, 5), fmt)
        obs = TwoPhaseObservation(np.ones((4, 2)), np.ones(2), np.ones((4, 3)), 1.0, cb, fmt)
        assert obs.t_fb == 5
