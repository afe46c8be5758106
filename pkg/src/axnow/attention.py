"""Axial attention and the two-stage decoder built from it.

Attention is restricted to one spatial axis at a time: every row (or column)
of the feature map is treated as an independent token sequence, so score
storage per layer is O(N * heads * len^2 * other_len) instead of the
O(N * heads * (H*W)^2) of full 2-D self-attention.

The row-wise decoder stage shifts its input right by one pixel before adding
position embeddings, so after its causally masked row blocks each output
pixel depends only on strictly earlier columns of the same row. The outer
decoder prepends unmasked-row + masked-column blocks and a shift down, giving
full raster-order causality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .modules import LayerNorm, Linear, Module
from .tensor import Parameter, Tensor, concat

NEG_INF = -1e9  # additive mask for disallowed attention logits

# test instrumentation: number of attention-score elements allocated
_score_elements = 0


def reset_score_counter() -> None:
    global _score_elements
    _score_elements = 0


def score_elements() -> int:
    return _score_elements


@dataclass
class AxialAttentionConfig:
    channels: int
    heads: int
    axis: str  # "row" or "column"
    masked: bool = False

    def __post_init__(self):
        if self.axis not in ("row", "column"):
            raise ValueError(f"axis must be 'row' or 'column', got {self.axis!r}")
        if self.channels % self.heads:
            raise ValueError(f"channels {self.channels} not divisible by heads {self.heads}")


def _to_sequences(x: Tensor, axis: str) -> Tensor:
    """[N, C, H, W] -> [N*H, W, C] for rows, [N*W, H, C] for columns."""
    n, c, h, w = x.shape
    if axis == "row":
        return x.transpose(0, 2, 3, 1).reshape(n * h, w, c)
    return x.transpose(0, 3, 2, 1).reshape(n * w, h, c)


def _from_sequences(x: Tensor, axis: str, n: int, c: int, h: int, w: int) -> Tensor:
    if axis == "row":
        return x.reshape(n, h, w, c).transpose(0, 3, 1, 2)
    return x.reshape(n, w, h, c).transpose(0, 3, 2, 1)


class MultiheadSelfAttention(Module):
    """Scaled dot-product self-attention over [B, L, C] sequences.

    Output projection is zero-initialized so a fresh attention layer is an
    exact no-op inside its residual connection.
    """

    def __init__(self, channels: int, heads: int, masked: bool, rng: np.random.Generator):
        super().__init__()
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.masked = masked
        self.q = Linear(channels, channels, rng)
        self.k = Linear(channels, channels, rng)
        self.v = Linear(channels, channels, rng)
        self.out = Linear(channels, channels, rng, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        global _score_elements
        b, ln, c = x.shape
        h = self.heads
        dh = c // h
        scale = 1.0 / np.sqrt(dh)

        def heads_first(t: Tensor) -> Tensor:
            return t.reshape(b, ln, h, dh).transpose(0, 2, 1, 3)  # [B, h, L, dh]

        q = heads_first(self.q(x)) * scale
        k = heads_first(self.k(x))
        v = heads_first(self.v(x))
        scores = q @ k.transpose(0, 1, 3, 2)  # [B, h, L, L]
        _score_elements += scores.size
        if self.masked:
            # causal: position i may attend to positions <= i
            mask = np.triu(np.full((ln, ln), NEG_INF), k=1)
            scores = scores + Tensor(mask)
        attn = ops.softmax(scores, axis=-1)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, ln, c)
        return self.out(ctx)


class AxialAttention(Module):
    """Row- or column-axis self-attention with a residual connection."""

    def __init__(self, cfg: AxialAttentionConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.attn = MultiheadSelfAttention(cfg.channels, cfg.heads, cfg.masked, rng)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if c != self.cfg.channels:
            raise ValueError(f"expected {self.cfg.channels} channels, got {c}")
        seq = _to_sequences(x, self.cfg.axis)
        out = _from_sequences(self.attn(seq), self.cfg.axis, n, c, h, w)
        return x + out


class TransformerBlock(Module):
    """Pre-LN block: residual attention then residual 2-layer feed-forward
    (hidden = 2 * channels, ReLU), applied along one spatial axis."""

    def __init__(self, channels: int, heads: int, axis: str, masked: bool, rng: np.random.Generator):
        super().__init__()
        self.axis = axis
        self.channels = channels
        self.norm1 = LayerNorm(channels)
        self.attn = MultiheadSelfAttention(channels, heads, masked, rng)
        self.norm2 = LayerNorm(channels)
        self.ff1 = Linear(channels, 2 * channels, rng)
        self.ff2 = Linear(2 * channels, channels, rng, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        seq = _to_sequences(x, self.axis)
        seq = seq + self.attn(self.norm1(seq))
        seq = seq + self.ff2(ops.relu(self.ff1(self.norm2(seq))))
        return _from_sequences(seq, self.axis, n, c, h, w)


class PositionEmbeddings(Module):
    """Learned additive embeddings, factorized into a row and a column table."""

    def __init__(self, height: int, width: int, channels: int, rng: np.random.Generator):
        super().__init__()
        self.row_embed = Parameter(rng.uniform(-0.02, 0.02, size=(height, channels)))
        self.col_embed = Parameter(rng.uniform(-0.02, 0.02, size=(width, channels)))

    def __call__(self) -> Tensor:
        h, c = self.row_embed.shape
        w, _ = self.col_embed.shape
        rows = self.row_embed.transpose(1, 0).reshape(1, c, h, 1)
        cols = self.col_embed.transpose(1, 0).reshape(1, c, 1, w)
        return rows + cols  # [1, C, H, W]


class InnerDecoder(Module):
    """Row-wise stage: shift right, add position embeddings, then L_row
    masked row blocks. Output pixel (i, j) depends only on inputs (i, j' < j)."""

    def __init__(self, channels: int, height: int, width: int, l_row: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if l_row < 1:
            raise ValueError("l_row must be >= 1")
        self.pos = PositionEmbeddings(height, width, channels, rng)
        self.blocks = [TransformerBlock(channels, heads, "row", True, rng) for _ in range(l_row)]

    def __call__(self, h: Tensor) -> Tensor:
        h = ops.shift_right(h) + self.pos()
        for block in self.blocks:
            h = block(h)
        return h


class OuterDecoder(Module):
    """Two-stage decoder with raster-order causality.

    Context u passes L_upper/2 pairs of (unmasked row, masked column) blocks;
    the row stage then runs on shift_down(u) + shift_right(h) + embeddings.
    """

    def __init__(
        self,
        channels: int,
        height: int,
        width: int,
        l_upper: int,
        l_row: int,
        heads: int,
        rng: np.random.Generator,
    ):
        super().__init__()
        if l_upper % 2:
            raise ValueError(f"l_upper must be even, got {l_upper}")
        self.pos = PositionEmbeddings(height, width, channels, rng)
        self.upper = []
        for _ in range(l_upper // 2):
            self.upper.append(TransformerBlock(channels, heads, "row", False, rng))
            self.upper.append(TransformerBlock(channels, heads, "column", True, rng))
        self.row_blocks = [TransformerBlock(channels, heads, "row", True, rng) for _ in range(l_row)]

    def __call__(self, h: Tensor) -> Tensor:
        u = h + self.pos()
        for block in self.upper:
            u = block(u)
        h = ops.shift_down(u) + ops.shift_right(h) + self.pos()
        for block in self.row_blocks:
            h = block(h)
        return h
