"""Training losses (differentiable, on tensors) and evaluation metrics
(plain numpy): MSE, L1, the conditional-GAN objective, PSNR and SSIM.

The mean-squared-error here is the standard mean of squared differences.
PSNR assumes unit-peak signals (all pipeline images live in [0, 1]) and is
-10*log10(MSE), +inf when the images are identical. SSIM is computed from
global whole-image statistics with population variances; defaults
c1 = 0.01^2 and c2 = 0.03^2 for unit dynamic range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .tensor import Tensor, as_tensor

# -- differentiable losses ------------------------------------------------------


def _check_shapes(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean over all elements of (pred - target)^2."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_shapes(pred, target)
    diff = pred - target
    return (diff * diff).mean()


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error; subgradient 0 at exact ties."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_shapes(pred, target)
    return (pred - target).abs().mean()


def bce_with_logits(logits: Tensor, target: float) -> Tensor:
    """Binary cross-entropy on raw scores, in the overflow-free form
    max(x, 0) - x*t + log(1 + exp(-|x|)), averaged over elements."""
    logits = as_tensor(logits)
    softplus = ((-logits.abs()).exp() + 1.0).log()
    return (ops.relu(logits) - logits * target + softplus).mean()


def cgan_losses(
    d_real: Tensor, d_fake: Tensor, pred: Tensor, target, lam: float = 100.0
) -> tuple[Tensor, Tensor]:
    """Adversarial objective plus weighted L1 content term.

    Discriminator pushes real scores to 1 and fake scores to 0; the
    generator pushes fake scores to 1 and adds lam * L1(pred, target).
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    loss_d = bce_with_logits(d_real, 1.0) + bce_with_logits(d_fake, 0.0)
    loss_g = bce_with_logits(d_fake, 1.0) + lam * l1_loss(pred, target)
    return loss_d, loss_g


# -- evaluation metrics -----------------------------------------------------------


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-peak images; +inf at MSE 0."""
    pred, target = np.asarray(pred), np.asarray(target)
    for name, img in (("pred", pred), ("target", target)):
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError(f"psnr: {name} values must lie in [0, 1]")
    err = mse(pred, target)
    if err == 0.0:
        return math.inf
    return float(-10.0 * np.log10(err))


def ssim(x: np.ndarray, y: np.ndarray, c1: float = 0.01**2, c2: float = 0.03**2) -> float:
    """Structural similarity from global image statistics.

    Single window over the whole image, population (1/N) variances.
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = ((x - mx) * (y - my)).mean()
    return float(
        ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    )


@dataclass
class MetricResult:
    psnr: float  # decibels, may be +inf
    ssim: float
    mse: float


def score_pair(pred: np.ndarray, target: np.ndarray) -> MetricResult:
    return MetricResult(psnr=psnr(pred, target), ssim=ssim(pred, target), mse=mse(pred, target))


# -- evaluation reports ---------------------------------------------------------------


@dataclass
class EvalRow:
    sequence_id: int
    step: int
    mse: float
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    """Per-(sequence, rollout-step) metric rows for one configuration."""

    configuration: str
    rows: list

    def aggregate(self) -> dict:
        """Unweighted means over rows; +inf PSNR excluded and counted."""
        finite = [r.psnr for r in self.rows if math.isfinite(r.psnr)]
        return {
            "mse": float(np.mean([r.mse for r in self.rows])),
            "psnr": float(np.mean(finite)) if finite else math.inf,
            "psnr_inf_count": sum(1 for r in self.rows if math.isinf(r.psnr)),
            "ssim": float(np.mean([r.ssim for r in self.rows])),
        }

    def step_aggregate(self, step: int) -> dict:
        sub = EvalReport(self.configuration, [r for r in self.rows if r.step == step])
        return sub.aggregate()

    def steps(self) -> list:
        return sorted({r.step for r in self.rows})

    def save(self, path) -> None:
        """Flat delimited table: sequence id, rollout step, mse, psnr, ssim."""
        with open(Path(path), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["sequence_id", "step", "mse", "psnr", "ssim"])
            for r in self.rows:
                writer.writerow([r.sequence_id, r.step, repr(r.mse), repr(r.psnr), repr(r.ssim)])

    @classmethod
    def load(cls, path, configuration: str = "") -> "EvalReport":
        rows = []
        with open(Path(path), newline="") as f:
            for rec in csv.DictReader(f):
                rows.append(
                    EvalRow(
                        sequence_id=int(rec["sequence_id"]),
                        step=int(rec["step"]),
                        mse=float(rec["mse"]),
                        psnr=float(rec["psnr"]),
                        ssim=float(rec["ssim"]),
                    )
                )
        return cls(configuration, rows)
