"""Desk-scale radar precipitation nowcasting toolkit.

Models (axial-attention UNet, plain UNet, ConvLSTM, conditional GAN) run on a
minimal numpy-backed tensor library with reverse-mode automatic
differentiation; the data pipeline, PSNR/SSIM evaluation and autoregressive
rollout are included. See the ``axnow`` CLI for end-to-end use.
"""

from .tensor import Parameter, Tensor, concat, default_dtype, set_default_dtype

__version__ = "0.1.0"

__all__ = [
    "Parameter",
    "Tensor",
    "concat",
    "default_dtype",
    "set_default_dtype",
    "__version__",
]
