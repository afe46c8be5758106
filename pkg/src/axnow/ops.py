"""Neural-network operations on tensors: convolutions, pooling, attention
plumbing (linear/softmax/normalization), shifts and dropout.

Convolutions use cross-correlation semantics (no kernel flip). conv2d and
conv_transpose2d share the same window-view/scatter helpers, which makes
conv_transpose2d the exact adjoint of conv2d by construction.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

# -- activations ---------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0  # gradient at exactly 0 is 0

    def backward(g):
        x._accum(g * mask)

    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        x._accum(g * np.where(mask, 1.0, slope))

    return Tensor._from_op(np.where(mask, x.data, slope * x.data), (x,), backward, "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    # overflow-free: exp of a non-positive argument only
    e = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        x._accum(g * out * (1.0 - out))

    return Tensor._from_op(out, (x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        x._accum(g * (1.0 - out * out))

    return Tensor._from_op(out, (x,), backward, "tanh")


# -- linear / softmax / normalization ---------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: x[..., Din] @ weight[Dout, Din]^T + bias."""
    x, weight = as_tensor(x), as_tensor(weight)
    dout, din = weight.shape
    if x.shape[-1] != din:
        raise ValueError(f"linear: last extent {x.shape[-1]} != Din {din}")
    x2 = x.data.reshape(-1, din)
    y2 = x2 @ weight.data.T
    if bias is not None:
        if bias.shape != (dout,):
            raise ValueError(f"linear: bias shape {bias.shape} != ({dout},)")
        y2 = y2 + bias.data
    out = y2.reshape(x.shape[:-1] + (dout,))
    prev = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, dout)
        x._accum((g2 @ weight.data).reshape(x.data.shape))
        weight._accum(g2.T @ x2)
        if bias is not None:
            bias._accum(g2.sum(axis=0))

    return Tensor._from_op(out, prev, backward, "linear")


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtraction)."""
    x = as_tensor(x)
    shift = x - x.data.max(axis=axis, keepdims=True)  # constant shift, gradient-exact
    e = shift.exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gamma + beta


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over [N, C, H, W].

    Train mode normalizes by batch statistics (population variance) and
    updates the running buffers in place; eval mode uses the buffers.
    """
    n, c, h, w = x.shape
    gam = gamma.reshape(1, c, 1, 1)
    bet = beta.reshape(1, c, 1, 1)
    if training:
        if n * h * w < 2:
            raise ValueError("batchnorm2d training mode needs N*H*W >= 2")
        mu = x.mean(axis=(0, 2, 3), keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.reshape(c)
        running_var *= 1.0 - momentum
        running_var += momentum * var.data.reshape(c)
        xhat = centered / (var + eps).sqrt()
    else:
        mu = running_mean.reshape(1, c, 1, 1)
        sd = np.sqrt(running_var + eps).reshape(1, c, 1, 1)
        xhat = (x - mu) / as_tensor(sd)
    return xhat * gam + bet


# -- convolution / pooling ------------------------------------------------------


def _window_view(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided sliding-window view [N, C, kh, kw, Ho, Wo] of a padded input."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


def _scatter_windows(cols: np.ndarray, out_shape: tuple, stride: int) -> np.ndarray:
    """Adjoint of ``_window_view``: scatter-add [N, C, kh, kw, Ho, Wo] windows."""
    n, c, kh, kw, ho, wo = cols.shape
    out = np.zeros(out_shape, dtype=cols.dtype)
    for di in range(kh):
        for dj in range(kw):
            out[:, :, di : di + ho * stride : stride, dj : dj + wo * stride : stride] += cols[
                :, :, di, dj
            ]
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Contiguous [N*Ho*Wo, C*kh*kw] patch matrix from a padded input."""
    n, c = xp.shape[:2]
    win = _window_view(xp, kh, kw, stride)  # [N, C, kh, kw, Ho, Wo]
    ho, wo = win.shape[4], win.shape[5]
    cols = np.ascontiguousarray(win.transpose(0, 4, 5, 1, 2, 3))
    return cols.reshape(n * ho * wo, c * kh * kw), ho, wo


def _col2im(cols2: np.ndarray, n: int, c: int, hp: int, wp: int, kh: int, kw: int, ho: int, wo: int, stride: int) -> np.ndarray:
    """Adjoint of ``_im2col``: scatter-add a patch matrix back into an image."""
    cols = cols2.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    return _scatter_windows(cols, (n, c, hp, wp), stride)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of [N, Cin, H, W] with [Cout, Cin, kH, kW]."""
    x, weight = as_tensor(x), as_tensor(weight)
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input has {cin} channels, weight expects {cin_w}")
    if stride < 1 or padding < 0 or kh < 1 or kw < 1:
        raise ValueError("conv2d: stride >= 1, padding >= 0, kernel >= 1 required")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError("conv2d: kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out = (cols @ wmat.T).reshape(n, ho, wo, cout)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        if bias.shape != (cout,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({cout},)")
        out += bias.data.reshape(1, cout, 1, 1)
    prev = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        weight._accum((g2.T @ cols).reshape(weight.data.shape))
        if bias is not None:
            bias._accum(g2.sum(axis=0))
        if stride == 1:
            # input grad = correlation of the padded output grad with the
            # spatially flipped, channel-swapped kernel (one GEMM)
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gcols, _, _ = _im2col(gp, kh, kw, 1)
            wflip = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(cin, cout * kh * kw)
            dxp = gcols @ wflip.T
            dxp = np.ascontiguousarray(
                dxp.reshape(n, xp.shape[2], xp.shape[3], cin).transpose(0, 3, 1, 2)
            )
        else:
            dxp = _col2im(g2 @ wmat, n, cin, xp.shape[2], xp.shape[3], kh, kw, ho, wo, stride)
        if padding:
            dxp = dxp[:, :, padding : padding + h, padding : padding + w]
        x._accum(dxp)

    return Tensor._from_op(out, prev, backward, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, stride: int = 1) -> Tensor:
    """Transposed convolution (adjoint of conv2d) of [N, Cin, H, W] with
    [Cin, Cout, kH, kW]; output is [(H-1)*stride + kH] x [(W-1)*stride + kW]."""
    x, weight = as_tensor(x), as_tensor(weight)
    n, cin, h, w = x.shape
    cin_w, cout, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv_transpose2d: input has {cin} channels, weight expects {cin_w}")
    if stride < 1:
        raise ValueError("conv_transpose2d: stride >= 1 required")
    ho = (h - 1) * stride + kh
    wo = (w - 1) * stride + kw
    x2 = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(n * h * w, cin)
    wmat = weight.data.reshape(cin, cout * kh * kw)
    out = _col2im(x2 @ wmat, n, cout, ho, wo, kh, kw, h, w, stride)

    def backward(g):
        gcols, gh, gw = _im2col(g, kh, kw, stride)  # [N*H*W, Cout*kh*kw]
        dx2 = gcols @ wmat.T
        x._accum(np.ascontiguousarray(dx2.reshape(n, h, w, cin).transpose(0, 3, 1, 2)))
        weight._accum((x2.T @ gcols).reshape(weight.data.shape))

    return Tensor._from_op(out, (x, weight), backward, "conv_transpose2d")


def maxpool2d(x: Tensor, k: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping max pooling; the models only use k == stride.

    Gradient routes to the first (row-major) argmax of each window.
    """
    x = as_tensor(x)
    if k != stride:
        raise ValueError("maxpool2d supports k == stride only")
    n, c, h, w = x.shape
    if h % stride or w % stride:
        raise ValueError(f"maxpool2d: spatial extents {h}x{w} not divisible by stride {stride}")
    ho, wo = h // k, w // k
    xw = x.data.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    idx = xw.argmax(axis=-1)
    out = np.take_along_axis(xw, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        buf = np.zeros((n, c, ho, wo, k * k), dtype=g.dtype)
        np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
        dx = buf.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        x._accum(dx)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), backward, "maxpool2d")


# -- shifts / dropout -------------------------------------------------------------


def shift_right(x: Tensor) -> Tensor:
    """Insert a zero column at index 0 and drop the last column."""
    x = as_tensor(x)
    out = np.zeros_like(x.data)
    out[..., 1:] = x.data[..., :-1]

    def backward(g):
        # adjoint is the inverse shift (drop column 0, zero-fill at the end)
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[..., :-1] += g[..., 1:]

    return Tensor._from_op(out, (x,), backward, "shift_right")


def shift_down(x: Tensor) -> Tensor:
    """Insert a zero row at index 0 and drop the last row."""
    x = as_tensor(x)
    out = np.zeros_like(x.data)
    out[..., 1:, :] = x.data[..., :-1, :]

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[..., :-1, :] += g[..., 1:, :]

    return Tensor._from_op(out, (x,), backward, "shift_down")


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p == 0.0:
        return x
    x = as_tensor(x)
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def backward(g):
        x._accum(g * mask)

    return Tensor._from_op(x.data * mask, (x,), backward, "dropout")
