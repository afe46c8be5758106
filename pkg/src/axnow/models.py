"""Model architectures: UNet, axial-attention UNet with a per-pixel intensity
distribution head, a stacked ConvLSTM forecaster, and a conditional GAN
(UNet generator + strided-conv discriminator).

Every model exposes ``in_frames`` (conditioning window length) and
``predict_next(window)`` mapping the last ``in_frames`` frames to the next
frame, which is what the autoregressive rollout consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .attention import OuterDecoder
from .modules import BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, Linear, Module
from .tensor import Tensor, concat


# -- specs -----------------------------------------------------------------------


@dataclass
class UNetSpec:
    in_frames: int = 16
    channel_plan: tuple = (16, 64, 128, 256)
    out_channels: int = 1

    def __post_init__(self):
        self.channel_plan = tuple(int(c) for c in self.channel_plan)
        plan = self.channel_plan
        if len(plan) < 2:
            raise ValueError("channel_plan needs at least two entries")
        if any(b <= a for a, b in zip(plan, plan[1:])):
            raise ValueError(f"channel_plan must be strictly increasing, got {plan}")
        if plan[0] != self.in_frames:
            raise ValueError(f"channel_plan[0] ({plan[0]}) must equal in_frames ({self.in_frames})")
        depth = len(plan) - 1
        if plan[-1] % (1 << depth):
            raise ValueError(f"deepest channel count {plan[-1]} must be divisible by 2^{depth}")

    @property
    def depth(self) -> int:
        return len(self.channel_plan) - 1


@dataclass
class AxialUNetSpec:
    unet: UNetSpec = field(default_factory=lambda: UNetSpec(in_frames=1, channel_plan=(1, 64, 128, 256), out_channels=32))
    in_frames: int = 16
    height: int = 128
    width: int = 128
    attn_channels: int = 32
    l_upper: int = 2
    l_row: int = 2
    heads: int = 4
    bins: int = 128

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.attn_channels % self.heads:
            raise ValueError(f"attn_channels {self.attn_channels} not divisible by heads {self.heads}")
        if self.unet.out_channels != self.attn_channels:
            raise ValueError("feature extractor out_channels must equal attn_channels")
        if self.unet.in_frames != 1:
            raise ValueError("the feature extractor runs per timestep (in_frames must be 1)")
        if self.l_upper % 2:
            raise ValueError("l_upper must be even")


@dataclass
class ConvLSTMSpec:
    layers: int = 3
    hidden_channels: int = 64
    kernel: int = 3
    padding: int = 1
    in_channels: int = 1
    in_frames: int = 15

    def __post_init__(self):
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        if self.padding != (self.kernel - 1) // 2:
            raise ValueError("padding must be (kernel - 1) // 2 to preserve spatial size")


@dataclass
class CGanSpec:
    generator: UNetSpec = field(default_factory=lambda: UNetSpec(in_frames=4, channel_plan=(4, 64, 128, 256), out_channels=4))
    disc_filters: tuple = (64, 128, 256, 512)
    lambda_l1: float = 100.0
    height: int = 128
    width: int = 128

    def __post_init__(self):
        self.disc_filters = tuple(int(f) for f in self.disc_filters)
        if self.generator.out_channels != self.generator.in_frames:
            raise ValueError("generator maps 4 conditioning frames to 4 predicted frames")


# -- UNet --------------------------------------------------------------------------


class DoubleConv(Module):
    """Two 3x3 conv + ReLU; identity residual when channel counts match."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(cin, cout, 3, rng, padding=1)
        self.conv2 = Conv2d(cout, cout, 3, rng, padding=1)
        self.residual = cin == cout

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.relu(self.conv2(ops.relu(self.conv1(x))))
        return y + x if self.residual else y


class UNet(Module):
    """Encoder-decoder with skip concatenation.

    Encoder: DoubleConv then 2x2 maxpool per stage, channels following the
    plan. Decoder: 2x2 stride-2 up-convolution halving the channels, concat
    with the matching encoder feature map, DoubleConv back to the halved
    width, then a 1x1 conv head.
    """

    kind = "unet"

    def __init__(
        self,
        spec: UNetSpec,
        rng: np.random.Generator,
        decoder_dropout: float = 0.0,
        sigmoid_output: bool = False,
    ):
        super().__init__()
        self.spec = spec
        self.sigmoid_output = sigmoid_output
        plan = spec.channel_plan
        self.encoder = [DoubleConv(plan[i], plan[i + 1], rng) for i in range(spec.depth)]
        self.ups = []
        self.decoder = []
        self.drops = []
        c = plan[-1]
        for i in reversed(range(spec.depth)):
            self.ups.append(ConvTranspose2d(c, c // 2, 2, rng, stride=2))
            self.decoder.append(DoubleConv(c // 2 + plan[i + 1], c // 2, rng))
            if decoder_dropout:
                self.drops.append(Dropout(decoder_dropout))
            c //= 2
        self.head = Conv2d(c, spec.out_channels, 1, rng)
        self._dropout_rng = np.random.default_rng(0)

    @property
    def in_frames(self) -> int:
        return self.spec.in_frames

    def reseed_dropout(self, seed: int) -> None:
        self._dropout_rng = np.random.default_rng(seed)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if c != self.spec.in_frames:
            raise ValueError(f"expected {self.spec.in_frames} input channels, got {c}")
        div = 1 << self.spec.depth
        if h % div or w % div:
            raise ValueError(f"spatial extent {h}x{w} must be divisible by {div}")
        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
            x = ops.maxpool2d(x)
        for i, (up, block) in enumerate(zip(self.ups, self.decoder)):
            x = up(x)
            x = concat([x, skips[-1 - i]], axis=1)
            x = block(x)
            if self.drops:
                x = self.drops[i](x, self._dropout_rng)
        y = self.head(x)
        return ops.sigmoid(y) if self.sigmoid_output else y

    def predict_next(self, window: np.ndarray) -> np.ndarray:
        out = self(Tensor(window[None]))
        return out.data[0, 0]


# -- axial-attention UNet ---------------------------------------------------------------


def head_mean(logits: Tensor) -> Tensor:
    """Expected intensity of the per-pixel bin distribution.

    Softmax over the bin axis, then expectation over bin centers
    k / (bins - 1); output is in [0, 1].
    """
    bins = logits.shape[1]
    p = ops.softmax(logits, axis=1)
    centers = (np.arange(bins) / (bins - 1)).reshape(1, bins, 1, 1)
    return (p * Tensor(centers)).sum(axis=1, keepdims=True)


class AxialUNet(Module):
    """Per-timestep UNet features, a learned 1x1 temporal merge, an axial
    transformer decoder, and a 1x1 head producing per-pixel bin logits."""

    kind = "axial-unet"

    def __init__(self, spec: AxialUNetSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        d = spec.attn_channels
        self.features = UNet(spec.unet, rng)
        self.merge = Conv2d(spec.in_frames * d, d, 1, rng)
        self.decoder = OuterDecoder(
            d, spec.height, spec.width, spec.l_upper, spec.l_row, spec.heads, rng
        )
        self.head = Conv2d(d, spec.bins, 1, rng)

    @property
    def in_frames(self) -> int:
        return self.spec.in_frames

    def __call__(self, frames: Tensor) -> Tensor:
        n, m, h, w = frames.shape
        if m != self.spec.in_frames:
            raise ValueError(f"expected {self.spec.in_frames} frames, got {m}")
        if (h, w) != (self.spec.height, self.spec.width):
            raise ValueError(
                f"expected {self.spec.height}x{self.spec.width} frames, got {h}x{w}"
            )
        d = self.spec.attn_channels
        feats = self.features(frames.reshape(n * m, 1, h, w))  # one map per input frame
        feats = self.merge(feats.reshape(n, m * d, h, w))
        feats = self.decoder(feats)
        return self.head(feats)

    def predict_next(self, window: np.ndarray) -> np.ndarray:
        return head_mean(self(Tensor(window[None]))).data[0, 0]


# -- ConvLSTM -----------------------------------------------------------------------------


class ConvLSTMCell(Module):
    """One convolutional LSTM cell; a single conv produces the stacked
    (input, forget, cell, output) pre-activations."""

    def __init__(self, cin: int, hidden: int, kernel: int, padding: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.gates = Conv2d(cin + hidden, 4 * hidden, kernel, rng, padding=padding)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[2:] != h.shape[2:]:
            raise ValueError(f"input {x.shape} and state {h.shape} spatial sizes differ")
        z = self.gates(concat([x, h], axis=1))
        hid = self.hidden
        i = ops.sigmoid(z[:, 0:hid])
        f = ops.sigmoid(z[:, hid : 2 * hid])
        g = ops.tanh(z[:, 2 * hid : 3 * hid])
        o = ops.sigmoid(z[:, 3 * hid : 4 * hid])
        c2 = f * c + i * g
        h2 = o * ops.tanh(c2)
        return h2, c2


class ConvLSTM(Module):
    """Stacked ConvLSTM unrolled over the conditioning frames; the final
    hidden state maps through a 1x1 conv + sigmoid to the next frame."""

    kind = "convlstm"

    def __init__(self, spec: ConvLSTMSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        cells = []
        cin = spec.in_channels
        for _ in range(spec.layers):
            cells.append(ConvLSTMCell(cin, spec.hidden_channels, spec.kernel, spec.padding, rng))
            cin = spec.hidden_channels
        self.cells = cells
        self.head = Conv2d(spec.hidden_channels, 1, 1, rng)

    @property
    def in_frames(self) -> int:
        return self.spec.in_frames

    def forecast(self, frames: Tensor) -> Tensor:
        """[N, T, 1, H, W] conditioning frames -> [N, 1, H, W] prediction."""
        n, t, c, h, w = frames.shape
        if t != self.spec.in_frames:
            raise ValueError(f"expected {self.spec.in_frames} frames, got {t}")
        if c != self.spec.in_channels:
            raise ValueError(f"expected {self.spec.in_channels} channels, got {c}")
        hid = self.spec.hidden_channels
        states = [
            (Tensor(np.zeros((n, hid, h, w))), Tensor(np.zeros((n, hid, h, w))))
            for _ in self.cells
        ]
        for ti in range(t):
            x = frames[:, ti]
            for li, cell in enumerate(self.cells):
                hs, cs = cell(x, *states[li])
                states[li] = (hs, cs)
                x = hs
        return ops.sigmoid(self.head(states[-1][0]))

    __call__ = forecast

    def predict_next(self, window: np.ndarray) -> np.ndarray:
        m, h, w = window.shape
        return self.forecast(Tensor(window[None, :, None])).data[0, 0]


# -- conditional GAN -------------------------------------------------------------------------


class Discriminator(Module):
    """Strided conv blocks (batchnorm except the first, LeakyReLU 0.2),
    flattened into a single real/fake logit."""

    def __init__(self, cin: int, filters: tuple, height: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.convs = []
        self.norms = []
        c = cin
        h, w = height, width
        for i, f in enumerate(filters):
            self.convs.append(Conv2d(c, f, 4, rng, stride=2, padding=1))
            self.norms.append(None if i == 0 else BatchNorm2d(f))
            c = f
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError("input too small for the discriminator stack")
        self.score = Linear(c * h * w, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        for conv, norm in zip(self.convs, self.norms):
            x = conv(x)
            if norm is not None:
                x = norm(x)
            x = ops.leaky_relu(x, 0.2)
        return self.score(x.reshape(n, -1))


class CGan(Module):
    """pix2pix-style conditional GAN: UNet generator (noise realized as
    train-time decoder dropout) and a conditioned discriminator."""

    kind = "cgan"

    def __init__(self, spec: CGanSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.generator = UNet(spec.generator, rng, decoder_dropout=0.5, sigmoid_output=True)
        cin = spec.generator.in_frames + spec.generator.out_channels
        self.discriminator = Discriminator(cin, spec.disc_filters, spec.height, spec.width, rng)

    @property
    def in_frames(self) -> int:
        return self.spec.generator.in_frames

    def generate(self, cond: Tensor) -> Tensor:
        return self.generator(cond)

    def discriminate(self, cond: Tensor, candidate: Tensor) -> Tensor:
        if cond.shape[2:] != candidate.shape[2:]:
            raise ValueError("conditioning and candidate spatial sizes differ")
        return self.discriminator(concat([cond, candidate], axis=1))

    def predict_next(self, window: np.ndarray) -> np.ndarray:
        # joint 4-in/4-out mapping: output frame 0 is the next-frame estimate
        out = self.generate(Tensor(window[None]))
        return out.data[0, 0]


class Persistence:
    """Baseline that repeats the last observed frame."""

    kind = "persistence"

    def __init__(self, in_frames: int = 16):
        self.in_frames = in_frames

    def eval(self):
        return self

    def predict_next(self, window: np.ndarray) -> np.ndarray:
        return window[-1].copy()


# -- spec (de)serialization for checkpoints ------------------------------------------------------


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v)


def spec_to_config(model) -> dict:
    spec = model.spec
    cfg = {"kind": model.kind}
    if isinstance(spec, UNetSpec):
        cfg.update(
            in_frames=spec.in_frames,
            channel_plan=",".join(map(str, spec.channel_plan)),
            out_channels=spec.out_channels,
        )
    elif isinstance(spec, AxialUNetSpec):
        cfg.update(
            in_frames=spec.in_frames,
            height=spec.height,
            width=spec.width,
            attn_channels=spec.attn_channels,
            l_upper=spec.l_upper,
            l_row=spec.l_row,
            heads=spec.heads,
            bins=spec.bins,
            feature_plan=",".join(map(str, spec.unet.channel_plan)),
        )
    elif isinstance(spec, ConvLSTMSpec):
        cfg.update(
            layers=spec.layers,
            hidden_channels=spec.hidden_channels,
            kernel=spec.kernel,
            padding=spec.padding,
            in_channels=spec.in_channels,
            in_frames=spec.in_frames,
        )
    elif isinstance(spec, CGanSpec):
        cfg.update(
            in_frames=spec.generator.in_frames,
            gen_plan=",".join(map(str, spec.generator.channel_plan)),
            disc_filters=",".join(map(str, spec.disc_filters)),
            lambda_l1=spec.lambda_l1,
            height=spec.height,
            width=spec.width,
        )
    else:
        raise TypeError(f"unknown spec type {type(spec)!r}")
    return {k: str(v) for k, v in cfg.items()}


def spec_from_config(cfg: dict):
    kind = cfg["kind"]
    if kind == "unet":
        return UNetSpec(
            in_frames=int(cfg["in_frames"]),
            channel_plan=_ints(cfg["channel_plan"]),
            out_channels=int(cfg["out_channels"]),
        )
    if kind == "axial-unet":
        plan = _ints(cfg["feature_plan"])
        return AxialUNetSpec(
            unet=UNetSpec(in_frames=1, channel_plan=plan, out_channels=int(cfg["attn_channels"])),
            in_frames=int(cfg["in_frames"]),
            height=int(cfg["height"]),
            width=int(cfg["width"]),
            attn_channels=int(cfg["attn_channels"]),
            l_upper=int(cfg["l_upper"]),
            l_row=int(cfg["l_row"]),
            heads=int(cfg["heads"]),
            bins=int(cfg["bins"]),
        )
    if kind == "convlstm":
        return ConvLSTMSpec(
            layers=int(cfg["layers"]),
            hidden_channels=int(cfg["hidden_channels"]),
            kernel=int(cfg["kernel"]),
            padding=int(cfg["padding"]),
            in_channels=int(cfg["in_channels"]),
            in_frames=int(cfg["in_frames"]),
        )
    if kind == "cgan":
        m = int(cfg["in_frames"])
        return CGanSpec(
            generator=UNetSpec(in_frames=m, channel_plan=_ints(cfg["gen_plan"]), out_channels=m),
            disc_filters=_ints(cfg["disc_filters"]),
            lambda_l1=float(cfg["lambda_l1"]),
            height=int(cfg["height"]),
            width=int(cfg["width"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def build_model(spec, seed: int):
    """Construct a model with seed-deterministic initialization."""
    rng = np.random.default_rng(seed)
    if isinstance(spec, UNetSpec):
        return UNet(spec, rng)
    if isinstance(spec, AxialUNetSpec):
        return AxialUNet(spec, rng)
    if isinstance(spec, ConvLSTMSpec):
        return ConvLSTM(spec, rng)
    if isinstance(spec, CGanSpec):
        return CGan(spec, rng)
    raise TypeError(f"unknown spec type {type(spec)!r}")


def save_model(path, model) -> None:
    """Write spec plus all parameters and buffers; round-trips bit-exactly."""
    from .checkpoint import save_checkpoint

    records = {f"param/{name}": p.data for name, p in model.named_parameters()}
    records.update({f"buffer/{name}": buf for name, buf in model.named_buffers()})
    save_checkpoint(path, spec_to_config(model), records)


def load_model(path):
    """Rebuild a model from a checkpoint under the current default dtype."""
    from .checkpoint import load_checkpoint
    from .tensor import default_dtype

    cfg, records = load_checkpoint(path)
    model = build_model(spec_from_config(cfg), seed=0)
    for name, p in model.named_parameters():
        key = f"param/{name}"
        if key not in records:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        arr = records[key]
        if arr.shape != p.data.shape:
            raise ValueError(f"parameter {name!r}: checkpoint shape {arr.shape} != model {p.data.shape}")
        p.data = arr.astype(default_dtype())
    for name, buf in model.named_buffers():
        key = f"buffer/{name}"
        if key in records:
            buf[:] = records[key]
    return model
