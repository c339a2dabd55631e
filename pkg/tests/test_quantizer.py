import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hstm.laplace import SYMBOL_MAX, SYMBOL_MIN
from hstm.quantizer import (QuantizationSteps, compose_qs, dequantize,
                            interpolate_qs_global, quantize)

LEARNED = np.array([0.5, 0.8, 1.3, 2.0])


def steps_for(shape, qs_global=1.0, qs_ch=None, qs_sc=None):
    c = shape[0]
    if qs_ch is None:
        qs_ch = np.ones(c)
    if qs_sc is None:
        qs_sc = np.ones(shape)
    return QuantizationSteps(qs_global=qs_global, qs_ch=qs_ch, qs_sc=qs_sc)


class TestRounding:
    def test_round_toward_nearest(self):
        qs = np.ones((1, 1, 1))
        assert quantize(np.full((1, 1, 1), 2.3), qs, 0.0)[0, 0, 0] == 2

    def test_half_away_from_zero(self):
        qs = np.ones((1, 1, 2))
        out = quantize(np.array([[[2.5, -2.5]]]), qs, 0.0)
        np.testing.assert_array_equal(out[0, 0], [3, -3])

    def test_zero_maps_to_zero(self):
        qs = np.full((2, 3, 3), 0.7)
        out = quantize(np.zeros((2, 3, 3)), qs, 0.0)
        assert not out.any()

    def test_saturates_to_coder_support(self):
        qs = np.ones((1, 1, 2))
        out = quantize(np.array([[[1e6, -1e6]]]), qs, 0.0)
        np.testing.assert_array_equal(out[0, 0], [SYMBOL_MAX, SYMBOL_MIN])

    def test_mean_is_subtracted_in_symbol_domain(self):
        qs = np.full((1, 1, 1), 2.0)
        mu = np.full((1, 1, 1), 0.2)
        out = quantize(np.full((1, 1, 1), 4.4), qs, mu)
        assert out[0, 0, 0] == 2  # round(4.4 / 2.0 - 0.2) = round(2.0)


class TestDequantize:
    def test_worked_example(self):
        qs = np.full((1, 1, 1), 2.0)
        mu = np.full((1, 1, 1), 0.2)
        out = dequantize(np.full((1, 1, 1), 2, dtype=np.int64), qs, mu)
        assert out[0, 0, 0] == pytest.approx(4.4)

    @given(st.floats(-2.0, 2.0), st.floats(0.05, 4.0))
    def test_reconstruction_error_within_half_step(self, y, q):
        # |y / q| stays inside the coder support, so no saturation here
        qs = np.full((1, 1, 1), q)
        sym = quantize(np.full((1, 1, 1), y), qs, 0.0)
        rec = dequantize(sym, qs, 0.0)
        assert abs(rec[0, 0, 0] - y) <= q / 2 + 1e-9

    def test_symbol_magnitude_shrinks_with_larger_step(self):
        y = np.full((1, 1, 1), 10.0)
        mags = []
        for q in [0.5, 1.0, 2.0, 4.0]:
            qs = np.full((1, 1, 1), q)
            mags.append(abs(int(quantize(y, qs, 0.0)[0, 0, 0])))
        assert all(a >= b for a, b in zip(mags, mags[1:]))


class TestCompose:
    def test_product_of_three_granularities(self):
        steps = QuantizationSteps(qs_global=2.0, qs_ch=np.array([1.0, 3.0]),
                                  qs_sc=np.full((2, 2, 2), 0.5))
        composed = compose_qs(steps)
        assert composed.shape == (2, 2, 2)
        assert composed[0, 0, 0] == pytest.approx(1.0)
        assert composed[1, 0, 0] == pytest.approx(3.0)

    def test_channel_vector_broadcasts(self):
        steps = steps_for((3, 4, 5), qs_ch=np.array([1.0, 2.0, 4.0]))
        composed = compose_qs(steps)
        np.testing.assert_allclose(composed[2], 4.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            QuantizationSteps(qs_global=0.0, qs_ch=np.ones(1), qs_sc=np.ones((1, 1, 1)))
        with pytest.raises(ValueError):
            QuantizationSteps(qs_global=1.0, qs_ch=np.array([-1.0]),
                              qs_sc=np.ones((1, 1, 1)))
        with pytest.raises(ValueError):
            QuantizationSteps(qs_global=1.0, qs_ch=np.ones(1),
                              qs_sc=np.full((1, 1, 1), 3.0))

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ValueError):
            quantize(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), 0.0)
        with pytest.raises(ValueError):
            dequantize(np.zeros((1, 1, 1)), np.full((1, 1, 1), -1.0), 0.0)


class TestInterpolation:
    def test_endpoints(self):
        assert interpolate_qs_global(LEARNED, 0.0) == pytest.approx(0.5)
        assert interpolate_qs_global(LEARNED, 1.0) == pytest.approx(2.0)

    def test_midpoint_is_geometric(self):
        assert interpolate_qs_global(LEARNED, 0.5) == pytest.approx(1.0)

    def test_monotone_in_t(self):
        ts = np.linspace(0, 1, 11)
        vals = [interpolate_qs_global(LEARNED, float(t)) for t in ts]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            interpolate_qs_global(LEARNED, -0.1)
        with pytest.raises(ValueError):
            interpolate_qs_global(LEARNED, 1.1)

    def test_nonpositive_learned_rejected(self):
        with pytest.raises(ValueError):
            interpolate_qs_global([0.0, 1.0], 0.5)
