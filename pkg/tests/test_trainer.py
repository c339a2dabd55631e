import numpy as np
import pytest

import hstm.training as training
from conftest import small_config, synthetic_clip
from hstm.laplace import estimate_bits
from hstm.pipeline import Codec
from hstm.priors import PriorBundle
from hstm.quantizer import compose_qs
from hstm.schedule import partition_masks
from hstm.tensor import Tensor
from hstm.training import (RdConfig, cascaded_loss, gradient_audit,
                           laplace_bits_tensor, rd_loss, train_cascaded,
                           two_step_surrogate)


class TestRdLoss:
    def test_worked_example(self):
        x = np.zeros((3, 2, 2))
        x_hat = np.full((3, 2, 2), 0.1)
        loss = rd_loss(x, x_hat, rate=99.0, lam=100.0)
        assert loss.item() == pytest.approx(100.0, rel=1e-12)

    def test_rate_normalized_by_pixel_count(self):
        x = np.zeros((3, 2, 2))
        x_hat = np.full((3, 2, 2), 0.1)
        loss = rd_loss(x, x_hat, rate=4.0, lam=50.0, pixel_count=8)
        assert loss.item() == pytest.approx(50 * 0.01 + 0.5, rel=1e-12)

    def test_differentiable_in_reconstruction(self):
        x = Tensor(np.zeros((1, 2, 2)))
        x_hat = Tensor(np.full((1, 2, 2), 0.5), requires_grad=True)
        loss = rd_loss(x, x_hat, rate=0.0, lam=4.0)
        loss.backward()
        np.testing.assert_allclose(x_hat.grad, 4.0 * 2 * 0.5 / 4)


class TestLaplaceBitsTensor:
    def test_matches_closed_form_estimate(self):
        rng = np.random.default_rng(0)
        v = np.rint(rng.laplace(0, 2.0, size=64))
        b = np.exp(rng.uniform(np.log(0.5), np.log(4.0), size=64))
        bits = laplace_bits_tensor(Tensor(v), Tensor(b)).sum()
        assert bits.item() == pytest.approx(estimate_bits(v, b), rel=1e-9)

    def test_center_branch_matches_at_zero(self):
        bits = laplace_bits_tensor(Tensor(np.zeros(1)), Tensor(np.ones(1)))
        assert bits.data[0] == pytest.approx(-np.log2(1 - np.exp(-0.5)), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        v0 = rng.laplace(0, 1.5, size=8)
        b0 = np.exp(rng.uniform(-0.5, 1.0, size=8))
        v = Tensor(v0.copy(), requires_grad=True)
        b = Tensor(b0.copy(), requires_grad=True)
        laplace_bits_tensor(v, b).sum().backward()
        h = 1e-6
        for i in range(8):
            if abs(abs(v0[i]) - 0.5) < 1e-3:
                continue  # the branch seam itself is only C0
            for t0, grad in ((v0, v.grad), (b0, b.grad)):
                bumped = t0.copy()
                bumped[i] += h
                up = laplace_bits_tensor(Tensor(bumped if t0 is v0 else v0),
                                         Tensor(bumped if t0 is b0 else b0)).sum().item()
                bumped[i] -= 2 * h
                dn = laplace_bits_tensor(Tensor(bumped if t0 is v0 else v0),
                                         Tensor(bumped if t0 is b0 else b0)).sum().item()
                fd = (up - dn) / (2 * h)
                assert grad[i] == pytest.approx(fd, rel=5e-4, abs=1e-7)


class TestSurrogateConsistency:
    def test_surrogate_rate_equals_coder_estimate(self):
        # the training rate and the coder's bit estimate are the same
        # closed form evaluated on the same symbols
        from hstm.dualprior import two_step_encode
        from hstm.priors import ParamEstimator
        rng = np.random.default_rng(2)
        est = ParamEstimator(4, 8, 8, rng)
        bundle = PriorBundle(hyper=Tensor(rng.normal(size=(4, 16, 16))))
        y = rng.normal(0, 0.5, size=(8, 16, 16))
        qs_ch = np.ones(8)
        real = two_step_encode(y, est, bundle, 1.0, qs_ch)
        _, rate = two_step_surrogate(Tensor(y), est, bundle, Tensor(np.array(1.0)),
                                     Tensor(qs_ch[:, None, None]))
        # the coder saturates symbols into the table support and floors the
        # per-symbol cost at 16 bits, so its estimate can only sit at or
        # slightly below the surrogate rate
        assert real.estimated_bits <= rate.item() + 1e-6
        assert rate.item() <= 1.05 * real.estimated_bits


class TestTraining:
    def test_loss_trace_is_reproducible(self):
        config = RdConfig(steps=3, cascade=1, lr=1e-3, seed=5)
        losses = []
        for _ in range(2):
            codec = Codec(small_config(seed=9))
            trace = train_cascaded(codec, synthetic_clip(frames=2), config)
            losses.append([row.loss for row in trace])
        assert losses[0] == losses[1]

    def test_lambdas_are_sampled_per_step(self):
        codec = Codec(small_config())
        config = RdConfig(steps=8, cascade=1, lr=1e-5, seed=0)
        trace = train_cascaded(codec, synthetic_clip(frames=2), config)
        assert len({row.lam for row in trace}) > 1

    def test_clip_too_short_rejected(self):
        codec = Codec(small_config())
        with pytest.raises(ValueError):
            train_cascaded(codec, synthetic_clip(frames=2),
                           RdConfig(steps=1, cascade=3))

    def test_constant_black_clip_stays_finite(self):
        codec = Codec(small_config(seed=4))
        clip = [np.zeros((3, 48, 48)) for _ in range(2)]
        trace = train_cascaded(codec, clip, RdConfig(steps=2, cascade=1, lr=1e-3))
        assert all(np.isfinite(row.loss) for row in trace)

    def test_msssim_distortion_mode_runs(self):
        codec = Codec(small_config(seed=6))
        config = RdConfig(steps=1, cascade=1, lr=1e-4, distortion="msssim")
        trace = train_cascaded(codec, synthetic_clip(frames=2), config)
        assert np.isfinite(trace[0].loss)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RdConfig(lambdas=(0.0,))
        with pytest.raises(ValueError):
            RdConfig(cascade=0)
        with pytest.raises(ValueError):
            RdConfig(distortion="mae")


class TestGradientAudit:
    def test_full_graph_gradients_check_out(self):
        codec = Codec(small_config(seed=2))
        clip = synthetic_clip(frames=2)
        report = gradient_audit(codec, clip, max_samples=12, seed=3)
        assert report.passed, report.failures
        assert report.checked == 12
        assert report.max_rel_err < 1e-3

    def test_audit_detects_a_broken_gradient(self, monkeypatch):
        # corrupt the recorded gradients by adding a term whose value is
        # identically zero but whose gradient is not; every sampled entry
        # must then fail the finite-difference comparison
        codec = Codec(small_config(seed=2))
        clip = synthetic_clip(frames=2)
        original = training.cascaded_loss

        def corrupted(codec, frames, lam_index, config, flags=None, frozen_flows=None):
            loss, d, r = original(codec, frames, lam_index, config, flags,
                                  frozen_flows)
            for p in codec.parameters():
                loss = loss + (p + (-1.0) * Tensor(p.data.copy())).sum() * 0.1
            return loss, d, r

        monkeypatch.setattr(training, "cascaded_loss", corrupted)
        report = gradient_audit(codec, clip, max_samples=3, seed=3)
        assert not report.passed
        assert report.max_rel_err > 1e-3


class TestCascadedLoss:
    def test_ablation_flags_change_the_loss(self):
        codec = Codec(small_config(seed=3))
        clip = synthetic_clip(frames=2)
        config = RdConfig(cascade=1)
        base, _, _ = cascaded_loss(codec, clip, 0, config)
        from hstm.config import AblationFlags
        other, _, _ = cascaded_loss(codec, clip, 0, config,
                                    flags=AblationFlags(no_qs_sc=True))
        assert base.item() != other.item()

    def test_rate_and_distortion_are_nonnegative(self):
        codec = Codec(small_config(seed=7))
        clip = synthetic_clip(frames=3)
        _, d, r = cascaded_loss(codec, clip, 1, RdConfig(cascade=2))
        assert d >= 0.0
        assert r >= 0.0
