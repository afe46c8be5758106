"""Loss and metric contracts: worked values, closed forms, invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from axnow import metrics
from axnow.tensor import Parameter, Tensor


class TestMseLoss:
    def test_zero_at_equality(self):
        x = Tensor(np.random.default_rng(0).random((3, 3)))
        assert metrics.mse_loss(x, Tensor(x.data.copy())).item() == 0.0

    def test_hand_value(self):
        assert metrics.mse_loss(Tensor([1.0, 0.0]), Tensor([0.0, 0.0])).item() == 0.5

    def test_gradient_is_scaled_residual(self):
        rng = np.random.default_rng(1)
        p = Parameter(rng.random(6))
        t = rng.random(6)
        loss = metrics.mse_loss(p, Tensor(t))
        loss.backward()
        np.testing.assert_allclose(p.grad, 2.0 * (p.data - t) / 6.0, rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            metrics.mse_loss(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


class TestL1Loss:
    def test_zero_at_equality(self):
        x = Tensor(np.random.default_rng(2).random(5))
        assert metrics.l1_loss(x, Tensor(x.data.copy())).item() == 0.0

    def test_hand_value(self):
        assert metrics.l1_loss(Tensor([1.0, -1.0]), Tensor([0.0, 0.0])).item() == 1.0

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        got = metrics.l1_loss(Tensor(a), Tensor(b)).item()
        assert got == pytest.approx(np.abs(a - b).mean(), rel=1e-12)


class TestCganLosses:
    def test_perfect_discriminator_limit(self):
        d_real = Tensor(np.full(4, 30.0))
        d_fake = Tensor(np.full(4, -30.0))
        pred = Tensor(np.zeros(4))
        loss_d, _ = metrics.cgan_losses(d_real, d_fake, pred, Tensor(np.zeros(4)))
        assert loss_d.item() == pytest.approx(0.0, abs=1e-10)

    def test_lambda_zero_is_pure_adversarial(self):
        rng = np.random.default_rng(4)
        d_real, d_fake = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))
        pred, target = Tensor(rng.random(5)), Tensor(rng.random(5))
        _, loss_g = metrics.cgan_losses(d_real, d_fake, pred, target, lam=0.0)
        adv = metrics.bce_with_logits(d_fake, 1.0)
        assert loss_g.item() == pytest.approx(adv.item(), rel=1e-12)

    def test_lambda_weighting_exact(self):
        rng = np.random.default_rng(5)
        d_real, d_fake = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))
        pred, target = Tensor(rng.random(5)), Tensor(rng.random(5))
        _, loss_g = metrics.cgan_losses(d_real, d_fake, pred, target, lam=100.0)
        adv = metrics.bce_with_logits(d_fake, 1.0).item()
        l1 = metrics.l1_loss(pred, target).item()
        assert loss_g.item() - adv == pytest.approx(100.0 * l1, rel=1e-12)

    def test_affine_in_lambda(self):
        rng = np.random.default_rng(6)
        d_real, d_fake = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))
        pred, target = Tensor(rng.random(4)), Tensor(rng.random(4))
        l1 = metrics.l1_loss(pred, target).item()
        values = [
            metrics.cgan_losses(d_real, d_fake, pred, target, lam)[1].item()
            for lam in (0.0, 1.0, 2.0)
        ]
        assert values[1] - values[0] == pytest.approx(l1, rel=1e-9)
        assert values[2] - values[1] == pytest.approx(l1, rel=1e-9)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            metrics.cgan_losses(Tensor([0.0]), Tensor([0.0]), Tensor([0.0]), Tensor([0.0]), -1.0)

    def test_bce_matches_naive_formula(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=20) * 3
        for target in (0.0, 1.0):
            got = metrics.bce_with_logits(Tensor(logits), target).item()
            p = 1.0 / (1.0 + np.exp(-logits))
            ref = -(target * np.log(p) + (1 - target) * np.log(1 - p)).mean()
            assert got == pytest.approx(ref, rel=1e-9)


class TestPsnr:
    def test_twenty_db(self):
        assert metrics.psnr(np.full((4, 4), 0.1), np.zeros((4, 4))) == pytest.approx(20.0, abs=1e-12)

    def test_identical_images_are_infinite(self):
        x = np.random.default_rng(8).random((5, 5))
        assert metrics.psnr(x, x) == math.inf

    def test_hand_value(self):
        got = metrics.psnr(np.array([0.5, 0.5]), np.array([0.0, 1.0]))
        assert got == pytest.approx(-10.0 * math.log10(0.25), abs=1e-12)
        assert got == pytest.approx(6.0206, abs=1e-4)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            metrics.psnr(np.array([1.5]), np.array([0.5]))
        with pytest.raises(ValueError):
            metrics.psnr(np.array([0.5]), np.array([-0.1]))

    def test_monotone_in_mse(self):
        rng = np.random.default_rng(9)
        pairs = []
        for _ in range(200):
            a, b = rng.random((6, 6)), rng.random((6, 6))
            pairs.append((metrics.mse(a, b), metrics.psnr(a, b)))
        pairs.sort()
        psnrs = [p for _, p in pairs]
        assert all(x >= y for x, y in zip(psnrs, psnrs[1:]))


class TestSsim:
    def test_self_similarity_is_one(self):
        x = np.random.default_rng(10).random((8, 8))
        assert metrics.ssim(x, x) == 1.0

    def test_constant_images_closed_form(self):
        c1 = 0.01**2
        got = metrics.ssim(np.zeros((4, 4)), np.ones((4, 4)))
        assert got == pytest.approx(c1 / (1.0 + c1), abs=1e-12)

    def test_symmetry_bitwise(self):
        rng = np.random.default_rng(11)
        x, y = rng.random((6, 6)), rng.random((6, 6))
        assert metrics.ssim(x, y) == metrics.ssim(y, x)

    @given(
        arrays(np.float64, (5, 5), elements=st.floats(0, 1)),
        arrays(np.float64, (5, 5), elements=st.floats(0, 1)),
    )
    @settings(max_examples=80, deadline=None)
    def test_bounded(self, x, y):
        v = metrics.ssim(x, y)
        assert -1.0 - 1e-9 <= v <= 1.0 + 1e-9

    def test_metric_result_invariants(self):
        rng = np.random.default_rng(12)
        x = rng.random((4, 4))
        r = metrics.score_pair(x, x)
        assert r.mse == 0.0 and r.psnr == math.inf and r.ssim == 1.0
        y = rng.random((4, 4))
        r2 = metrics.score_pair(x, y)
        assert r2.mse > 0.0 and math.isfinite(r2.psnr)


class TestEvalReport:
    def _report(self):
        rows = [
            metrics.EvalRow(0, 1, 0.01, 20.0, 0.9),
            metrics.EvalRow(0, 2, 0.04, 13.979400086720377, 0.7),
            metrics.EvalRow(1, 1, 0.0, math.inf, 1.0),
        ]
        return metrics.EvalReport("demo", rows)

    def test_aggregate_excludes_infinite_psnr(self):
        agg = self._report().aggregate()
        assert agg["psnr"] == pytest.approx((20.0 + 13.979400086720377) / 2)
        assert agg["psnr_inf_count"] == 1
        assert agg["ssim"] == pytest.approx((0.9 + 0.7 + 1.0) / 3)

    def test_round_trip(self, tmp_path):
        rep = self._report()
        path = tmp_path / "report.csv"
        rep.save(path)
        back = metrics.EvalReport.load(path, "demo")
        assert len(back.rows) == 3
        for a, b in zip(rep.rows, back.rows):
            assert (a.sequence_id, a.step, a.mse, a.psnr, a.ssim) == (
                b.sequence_id,
                b.step,
                b.mse,
                b.psnr,
                b.ssim,
            )

    def test_step_aggregate(self):
        agg = self._report().step_aggregate(1)
        assert agg["ssim"] == pytest.approx(0.95)
