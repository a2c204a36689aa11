"""Channel vectors, random streams and the squared CDI error."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_csit.channel import (
    ChannelVector,
    DimensionError,
    RngStream,
    UndefinedDirectionError,
    complex_normal,
    draw_channel,
    draw_channels,
    draw_noise_matrix,
    squared_cdi_error,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
cplx = st.builds(complex, finite, finite)


class TestChannelVector:
    @given(st.lists(cplx, min_size=1, max_size=8))
    def test_direction_unit_norm_and_reconstruction(self, entries):
        h = ChannelVector(np.array(entries))
        if h.norm == 0:
            with pytest.raises(UndefinedDirectionError):
                h.direction()
            return
        d = h.direction()
        assert abs(d.norm - 1.0) <= 1e-12
        np.testing.assert_allclose(h.norm * d.entries, h.entries, atol=1e-12 * max(1.0, h.norm))

    def test_entries_are_frozen_copies(self):
        src = np.array([1 + 1j, 2.0])
        h = ChannelVector(src)
        src[0] = 0
        assert h.entries[0] == 1 + 1j
        with pytest.raises(ValueError):
            h.entries[0] = 5

    def test_empty_rejected(self):
        with pytest.raises(DimensionError):
            ChannelVector(np.array([]))


class TestRngStream:
    def test_replay_identical(self):
        a = draw_channel(4, RngStream(3, (1, 2)))
        b = draw_channel(4, RngStream(3, (1, 2)))
        np.testing.assert_array_equal(a.entries, b.entries)

    def test_streams_differ(self):
        a = draw_channel(4, RngStream(3, 0))
        b = draw_channel(4, RngStream(3, 1))
        assert not np.allclose(a.entries, b.entries)

    def test_int_and_tuple_stream_ids_agree(self):
        a = complex_normal(RngStream(5, 7), 3)
        b = complex_normal(RngStream(5, (7,)), 3)
        np.testing.assert_array_equal(a, b)

    def test_rejects_other_rng_types(self):
        with pytest.raises(TypeError):
            complex_normal(42, 3)


class TestDraws:
    def test_channel_energy_concentrates(self):
        H = draw_channels(100_000, 4, RngStream(11))
        mean = np.mean(np.sum(np.abs(H) ** 2, axis=1))
        assert 3.95 <= mean <= 4.05

    def test_noise_matrix_shape_and_variance(self):
        gen = RngStream(2).generator
        N = np.stack([draw_noise_matrix(4, 20, gen) for _ in range(2000)])
        assert N.shape[1:] == (4, 20)
        assert abs(np.mean(np.abs(N) ** 2) - 1.0) < 0.01
        # real and imaginary parts each carry half the power
        assert abs(np.var(N.real) - 0.5) < 0.01

    def test_scalar_noise(self):
        assert draw_noise_matrix(1, 1, RngStream(0)).shape == (1, 1)

    def test_noise_replay(self):
        a = draw_noise_matrix(4, 20, RngStream(9, 4))
        b = draw_noise_matrix(4, 20, RngStream(9, 4))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("args", [(0, 4), (4, 0)])
    def test_bad_sizes(self, args):
        with pytest.raises(DimensionError):
            draw_noise_matrix(*args, RngStream(0))
        with pytest.raises(DimensionError):
            draw_channels(*args, RngStream(0))


class TestSquaredCdiError:
    def test_scaled_copy_is_zero(self, rng):
        h = complex_normal(rng, 4)
        assert squared_cdi_error(h, (2.5 - 1.5j) * h) == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal_is_one(self):
        e = np.eye(4)
        assert squared_cdi_error(e[0], e[1]) == 1.0

    def test_half(self):
        h = np.array([1, 1, 0, 0]) / np.sqrt(2)
        assert squared_cdi_error(h, [1, 0, 0, 0]) == pytest.approx(0.5, abs=1e-15)

    def test_accepts_channel_vectors(self):
        h = ChannelVector([1, 1j])
        assert squared_cdi_error(h, ChannelVector([1j, -1])) == pytest.approx(0.0, abs=1e-15)

    def test_batched_matches_loop(self, rng):
        A = complex_normal(rng, (50, 4))
        B = complex_normal(rng, (50, 4))
        batch = squared_cdi_error(A, B)
        loop = [squared_cdi_error(a, b) for a, b in zip(A, B)]
        np.testing.assert_allclose(batch, loop, rtol=0, atol=1e-15)

    @settings(max_examples=200)
    @given(st.lists(cplx, min_size=3, max_size=3), st.lists(cplx, min_size=3, max_size=3))
    def test_range(self, a, b):
        a, b = np.array(a), np.array(b)
        if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
            return
        e = squared_cdi_error(a, b)
        assert 0.0 <= e <= 1.0

    def test_zero_vector_raises(self):
        with pytest.raises(UndefinedDirectionError):
            squared_cdi_error([0, 0], [1, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            squared_cdi_error([1, 0, 0], [1, 0])
