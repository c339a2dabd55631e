import numpy as np
import pytest

from hstm.dualprior import two_step_decode, two_step_encode
from hstm.priors import ParamEstimator, PriorBundle
from hstm.rangecoder import Bitstream
from hstm.schedule import partition_masks
from hstm.tensor import Tensor


def setup_case(seed=0, shape=(8, 16, 16), hyper_c=4):
    rng = np.random.default_rng(seed)
    est = ParamEstimator(hyper_c, shape[0], 8, rng)
    bundle = PriorBundle(hyper=Tensor(rng.normal(size=(hyper_c,) + shape[1:])))
    y = rng.normal(0, 2.0, size=shape)
    qs_ch = np.full(shape[0], 1.0)
    return est, bundle, y, qs_ch


class TestRoundtrip:
    def test_decode_matches_encoder_reconstruction(self):
        est, bundle, y, qs_ch = setup_case()
        result = two_step_encode(y, est, bundle, 1.0, qs_ch)
        back = two_step_decode(Bitstream(result.step1.data),
                               Bitstream(result.step2.data),
                               y.shape, est, bundle, 1.0, qs_ch)
        np.testing.assert_array_equal(back, result.reconstruction)

    def test_finer_step_reconstructs_better(self):
        est, bundle, y, qs_ch = setup_case(seed=1)
        fine = two_step_encode(y, est, bundle, 0.25, qs_ch)
        coarse = two_step_encode(y, est, bundle, 2.0, qs_ch)
        fine_err = np.mean(np.abs(fine.reconstruction - y))
        coarse_err = np.mean(np.abs(coarse.reconstruction - y))
        assert fine_err < coarse_err

    def test_unit_qs_sc_toggle_changes_stream(self):
        est, bundle, y, qs_ch = setup_case(seed=2)
        a = two_step_encode(y, est, bundle, 1.0, qs_ch)
        b = two_step_encode(y, est, bundle, 1.0, qs_ch, force_unit_qs_sc=True)
        assert a.step1.data != b.step1.data or a.step2.data != b.step2.data
        back = two_step_decode(Bitstream(b.step1.data), Bitstream(b.step2.data),
                               y.shape, est, bundle, 1.0, qs_ch,
                               force_unit_qs_sc=True)
        np.testing.assert_array_equal(back, b.reconstruction)

    def test_payload_tracks_estimate(self):
        est, bundle, y, qs_ch = setup_case(seed=3, shape=(8, 32, 32))
        result = two_step_encode(y, est, bundle, 1.0, qs_ch)
        payload = 8 * (len(result.step1.data) + len(result.step2.data))
        # untrained parameters mismatch the data, so allow the count-rounding
        # overhead a few percent on top of the cross-entropy estimate
        assert payload <= 1.02 * result.estimated_bits + 128

    def test_global_step_controls_rate(self):
        est, bundle, y, qs_ch = setup_case(seed=4)
        fine = two_step_encode(y, est, bundle, 0.25, qs_ch)
        coarse = two_step_encode(y, est, bundle, 2.0, qs_ch)
        fine_bytes = len(fine.step1.data) + len(fine.step2.data)
        coarse_bytes = len(coarse.step1.data) + len(coarse.step2.data)
        assert coarse_bytes < fine_bytes


class TestCausality:
    def test_step1_parameters_ignore_the_latent(self):
        est, bundle, y, qs_ch = setup_case(seed=5)
        a = two_step_encode(y, est, bundle, 1.0, qs_ch)
        b = two_step_encode(y + 0.3, est, bundle, 1.0, qs_ch)
        # same priors means the step-one coding tables are identical, so
        # equal symbols produce equal payloads even though y changed
        schedule = partition_masks(y.shape)
        if np.array_equal(a.reconstruction[schedule.step1],
                          b.reconstruction[schedule.step1]):
            assert a.step1.data == b.step1.data

    def test_step2_context_is_step1_reconstruction_only(self):
        est, bundle, y, qs_ch = setup_case(seed=6)
        seen = {}
        original = est.estimate_step2

        def spy(fused, context):
            seen["context"] = context.data.copy()
            return original(fused, context)

        est.estimate_step2 = spy
        result = two_step_encode(y, est, bundle, 1.0, qs_ch)
        est.estimate_step2 = original
        schedule = partition_masks(y.shape)
        context = seen["context"]
        # nothing from the not-yet-coded step-two positions leaks in
        assert not context[schedule.step2].any()
        np.testing.assert_array_equal(context[schedule.step1],
                                      result.reconstruction[schedule.step1])

    def test_decoder_sees_identical_step2_context(self):
        est, bundle, y, qs_ch = setup_case(seed=7)
        contexts = []
        original = est.estimate_step2

        def spy(fused, context):
            contexts.append(context.data.copy())
            return original(fused, context)

        est.estimate_step2 = spy
        result = two_step_encode(y, est, bundle, 1.0, qs_ch)
        two_step_decode(Bitstream(result.step1.data), Bitstream(result.step2.data),
                        y.shape, est, bundle, 1.0, qs_ch)
        est.estimate_step2 = original
        np.testing.assert_array_equal(contexts[0], contexts[1])
