"""Shared finite-difference gradient suite: one named case per
differentiable operation and per model, reused by the unit tests and the
acceptance gate."""

from __future__ import annotations

import numpy as np

from axnow import ops
from axnow.gradcheck import check_gradients
from axnow.models import (
    AxialUNetSpec,
    CGanSpec,
    ConvLSTMSpec,
    UNetSpec,
    build_model,
    head_mean,
)
from axnow.tensor import Parameter, Tensor, concat
from axnow import metrics


def _p(rng, shape, scale=1.0):
    return Parameter(rng.normal(size=shape) * scale)


def op_gradient_cases() -> dict:
    """name -> (build_loss, tensors); every differentiable tensor op."""
    rng = np.random.default_rng(1234)
    cases = {}

    x = _p(rng, (2, 3, 6, 6))
    w = _p(rng, (4, 3, 3, 3), 0.4)
    b = _p(rng, (4,), 0.2)
    cases["conv2d_s1p1"] = (lambda: (ops.conv2d(x, w, b, 1, 1) ** 2).sum(), [x, w, b])
    cases["conv2d_s2p1"] = (lambda: (ops.conv2d(x, w, b, 2, 1) ** 2).sum(), [x, w, b])
    wt = _p(rng, (3, 5, 2, 2), 0.4)
    cases["conv_transpose2d"] = (lambda: (ops.conv_transpose2d(x, wt, 2) ** 2).sum(), [x, wt])
    xp4 = _p(rng, (2, 3, 4, 4))
    cases["maxpool2d"] = (lambda: (ops.maxpool2d(xp4) ** 2).sum(), [xp4])

    xl = _p(rng, (2, 5, 7))
    wl = _p(rng, (4, 7), 0.4)
    bl = _p(rng, (4,))
    cases["linear"] = (lambda: (ops.linear(xl, wl, bl) ** 2).sum(), [xl, wl, bl])

    xa = _p(rng, (3, 6))
    cases["relu"] = (lambda: (ops.relu(xa) * 1.5).sum(), [xa])
    cases["leaky_relu"] = (lambda: (ops.leaky_relu(xa, 0.2) ** 2).sum(), [xa])
    cases["sigmoid"] = (lambda: (ops.sigmoid(xa) ** 2).sum(), [xa])
    cases["tanh"] = (lambda: (ops.tanh(xa) ** 2).sum(), [xa])
    cases["softmax"] = (lambda: ((ops.softmax(xa, 1) - 0.3) ** 2).sum(), [xa])

    xb = _p(rng, (2, 4, 5, 5))
    gb, bb = _p(rng, (4,)), _p(rng, (4,))
    rm, rv = np.zeros(4), np.ones(4)
    cases["batchnorm2d_train"] = (
        lambda: (ops.batchnorm2d(xb, gb, bb, rm.copy(), rv.copy(), True) ** 2).sum(),
        [xb, gb, bb],
    )
    cases["batchnorm2d_eval"] = (
        lambda: (ops.batchnorm2d(xb, gb, bb, rm, rv, False) ** 2).sum(),
        [xb, gb, bb],
    )
    xn = _p(rng, (2, 3, 4))
    gn, bn = _p(rng, (4,)), _p(rng, (4,))
    cases["layer_norm"] = (lambda: (ops.layer_norm(xn, gn, bn) ** 2).sum(), [xn, gn, bn])

    xs = _p(rng, (2, 3, 4, 4))
    cases["shift_right"] = (lambda: (ops.shift_right(xs) ** 2).sum(), [xs])
    cases["shift_down"] = (lambda: (ops.shift_down(xs) ** 2).sum(), [xs])
    c1, c2 = _p(rng, (2, 3, 4)), _p(rng, (2, 2, 4))
    cases["concat"] = (lambda: (concat([c1, c2], 1) ** 2).sum(), [c1, c2])
    m1, m2 = _p(rng, (2, 3, 4)), _p(rng, (2, 4, 5))
    cases["matmul"] = (lambda: ((m1 @ m2) ** 2).sum(), [m1, m2])
    cases["slice_transpose_reshape"] = (
        lambda: ((xa[1:, 2:].transpose(1, 0).reshape(-1, 2)) ** 2).sum(),
        [xa],
    )

    dmask = np.random.default_rng(5).random((3, 6))  # frozen dropout pattern
    cases["dropout"] = (
        lambda: (ops.dropout(xa, 0.5, _FixedRng(dmask), True) ** 2).sum(),
        [xa],
    )

    lp, lt = _p(rng, (3, 4)), rng.normal(size=(3, 4))
    cases["mse_loss"] = (lambda: metrics.mse_loss(lp, Tensor(lt)), [lp])
    cases["l1_loss"] = (lambda: metrics.l1_loss(lp, Tensor(lt)), [lp])
    cases["bce_with_logits"] = (lambda: metrics.bce_with_logits(lp, 1.0), [lp])
    return cases


class _FixedRng:
    """Deterministic stand-in for a Generator inside gradient checks."""

    def __init__(self, field):
        self._field = field

    def random(self, shape):
        assert shape == self._field.shape
        return self._field


def model_gradient_cases() -> dict:
    """name -> (build_loss, params); every model at a small desk config."""
    cases = {}
    rng = np.random.default_rng(99)

    unet = build_model(UNetSpec(in_frames=4, channel_plan=(4, 8, 16), out_channels=1), seed=11)
    ux = Tensor(rng.random((2, 4, 8, 8)))
    uy = Tensor(rng.random((2, 1, 8, 8)))
    cases["unet"] = (lambda: metrics.mse_loss(unet(ux), uy), unet.parameters())

    aspec = AxialUNetSpec(
        unet=UNetSpec(in_frames=1, channel_plan=(1, 2, 4), out_channels=4),
        in_frames=3,
        height=8,
        width=8,
        attn_channels=4,
        l_upper=2,
        l_row=1,
        heads=2,
        bins=4,
    )
    axial = build_model(aspec, seed=12)
    ax = Tensor(rng.random((1, 3, 8, 8)))
    ay = Tensor(rng.random((1, 1, 8, 8)))
    cases["axial_unet"] = (lambda: metrics.mse_loss(head_mean(axial(ax)), ay), axial.parameters())

    cl = build_model(ConvLSTMSpec(layers=3, hidden_channels=3, in_frames=4), seed=13)
    cx = Tensor(rng.random((1, 4, 1, 8, 8)))
    cy = Tensor(rng.random((1, 1, 8, 8)))
    cases["convlstm"] = (lambda: metrics.mse_loss(cl(cx), cy), cl.parameters())

    gspec = CGanSpec(
        generator=UNetSpec(in_frames=2, channel_plan=(2, 4, 8), out_channels=2),
        disc_filters=(3, 6),
        lambda_l1=100.0,
        height=16,
        width=16,
    )
    gan = build_model(gspec, seed=14)
    gan.generator.drops = []  # dropout off so the loss is input-deterministic
    gc = Tensor(rng.random((2, 2, 16, 16)))
    gy = Tensor(rng.random((2, 2, 16, 16)))

    def gan_g_loss():
        fake = gan.generate(gc)
        return metrics.bce_with_logits(gan.discriminate(gc, fake), 1.0) + metrics.l1_loss(fake, gy)

    cases["cgan_generator"] = (gan_g_loss, gan.generator.parameters())

    def gan_d_loss():
        fake = gan.generate(gc).detach()
        d_real = gan.discriminate(gc, gy)
        d_fake = gan.discriminate(gc, fake)
        return metrics.bce_with_logits(d_real, 1.0) + metrics.bce_with_logits(d_fake, 0.0)

    cases["cgan_discriminator"] = (gan_d_loss, gan.discriminator.parameters())
    return cases


def run_gradient_suite(n_samples: int = 100, seed: int = 2) -> dict:
    """Run every case; returns name -> max guarded relative error."""
    import zlib

    results = {}
    for name, (build, tensors) in {**op_gradient_cases(), **model_gradient_cases()}.items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        results[name] = check_gradients(build, tensors, rng=rng, n_samples=n_samples)
    return results
