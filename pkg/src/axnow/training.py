"""Adam optimizer, per-model training loops, autoregressive rollout and
rollout evaluation against the persistence baseline.

Training targets: the models condition on the first M frames of each
length-20 sequence and regress frame M+1 (the cGAN maps its 4 conditioning
frames to the following 4 frames jointly). Longer horizons come from
feeding predictions back in autoregressively.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .data import DatasetSplit
from .models import AxialUNet, CGan, ConvLSTM, UNet, build_model, head_mean, save_model
from .tensor import Parameter, Tensor, default_dtype


class TrainingDiverged(RuntimeError):
    pass


# -- optimizer -------------------------------------------------------------------


class Adam:
    """Adam with bias correction; epsilon is added outside the square root."""

    def __init__(
        self,
        named_params,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = [(name, p) for name, p in named_params]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for i, (name, p) in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient in parameter {name!r} at step {self.t}")
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return math.sqrt(total)


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# -- configuration ----------------------------------------------------------------


@dataclass
class TrainConfig:
    model: str
    epochs: int
    batch_size: int
    lr: float
    seed: int = 0
    input_frames: int = 16
    loss: str = "mse"
    grad_clip: float | None = None


_DEFAULTS = {
    "convlstm": TrainConfig("convlstm", epochs=5, batch_size=2, lr=1e-3, input_frames=15, grad_clip=5.0),
    "cgan": TrainConfig("cgan", epochs=10, batch_size=4, lr=1e-4, input_frames=4, loss="cgan"),
    "unet": TrainConfig("unet", epochs=5, batch_size=4, lr=1e-3, input_frames=16),
    "axial-unet": TrainConfig("axial-unet", epochs=15, batch_size=1, lr=1e-4, input_frames=16),
}


def default_train_config(kind: str) -> TrainConfig:
    if kind not in _DEFAULTS:
        raise ValueError(f"unknown model kind {kind!r} (choose from {sorted(_DEFAULTS)})")
    return replace(_DEFAULTS[kind])


@dataclass
class TrainResult:
    model: object
    curve: list  # (epoch, train_loss, val_loss)
    checkpoint_path: Path | None = None


# -- loss plumbing -----------------------------------------------------------------


def _frames_array(seqs, idx) -> np.ndarray:
    return np.stack([seqs[i].frames for i in idx]).astype(default_dtype())


def _regression_loss(model, frames: np.ndarray, m: int) -> Tensor:
    x = frames[:, :m]
    y = frames[:, m : m + 1]
    if isinstance(model, ConvLSTM):
        pred = model.forecast(Tensor(x[:, :, None]))
    elif isinstance(model, AxialUNet):
        pred = head_mean(model(Tensor(x)))
    elif isinstance(model, UNet):
        pred = model(Tensor(x))
    else:
        raise TypeError(f"no regression loss for {type(model)!r}")
    return metrics.mse_loss(pred, Tensor(y))


def _cgan_batch(model: CGan, frames: np.ndarray, m: int, opt_d: Adam | None, opt_g: Adam | None) -> float:
    """One alternating D/G update (or a pure evaluation when opts are None).

    Returns the generator objective (adversarial + lambda * L1).
    """
    cond = Tensor(frames[:, :m])
    real = Tensor(frames[:, m : 2 * m])
    lam = model.spec.lambda_l1
    fake = model.generate(cond)
    if opt_d is not None:
        d_real = model.discriminate(cond, real)
        d_fake_detached = model.discriminate(cond, fake.detach())
        loss_d, _ = metrics.cgan_losses(d_real, d_fake_detached, fake, real, lam)
        model.zero_grad()
        loss_d.backward()
        opt_d.step()
    d_fake = model.discriminate(cond, fake)
    loss_g = metrics.bce_with_logits(d_fake, 1.0) + lam * metrics.l1_loss(fake, real)
    if opt_g is not None:
        model.zero_grad()
        loss_g.backward()
        opt_g.step()
    return loss_g.item()


# -- training loop ------------------------------------------------------------------


def train(spec, config: TrainConfig, split: DatasetSplit, out_dir: Path | None = None) -> TrainResult:
    """Train a model built from ``spec`` under ``config``.

    Writes ``checkpoint.axnw`` and ``loss.csv`` into ``out_dir`` after every
    epoch (so the last finished epoch survives a divergence abort). Loss rows
    are (epoch, train_loss, val_loss); validation runs in eval mode with the
    same loss as training.
    """
    model = build_model(spec, seed=config.seed)
    if isinstance(model, CGan):
        model.generator.reseed_dropout(config.seed + 1)
        opt_d = Adam(
            (("discriminator." + n, p) for n, p in model.discriminator.named_parameters()),
            lr=config.lr,
        )
        opt_g = Adam(
            (("generator." + n, p) for n, p in model.generator.named_parameters()),
            lr=config.lr,
        )
        opts = (opt_d, opt_g)
    else:
        opts = (Adam(model.named_parameters(), lr=config.lr),)
    order_rng = np.random.default_rng([config.seed, 0xA11CE])
    m = config.input_frames
    checkpoint_path = None
    curve: list[tuple[int, float, float]] = []

    def run_epoch(seqs, training: bool) -> float:
        model.train(training)
        n = len(seqs)
        idx = order_rng.permutation(n) if training else np.arange(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            batch = idx[start : start + config.batch_size]
            frames = _frames_array(seqs, batch)
            if isinstance(model, CGan):
                value = _cgan_batch(model, frames, m, *(opts if training else (None, None)))
            else:
                loss = _regression_loss(model, frames, m)
                value = loss.item()
                if training:
                    model.zero_grad()
                    loss.backward()
                    if config.grad_clip is not None:
                        clip_grad_norm(model.parameters(), config.grad_clip)
                    opts[0].step()
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"loss became non-finite in epoch {len(curve) + 1}"
                    + (f"; last checkpoint: {checkpoint_path}" if checkpoint_path else "")
                )
            total += value * len(batch)
            seen += len(batch)
        return total / seen

    for epoch in range(1, config.epochs + 1):
        train_loss = run_epoch(split.train, training=True)
        val_loss = run_epoch(split.val, training=False) if split.val else math.nan
        curve.append((epoch, train_loss, val_loss))
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            checkpoint_path = out_dir / "checkpoint.axnw"
            save_model(checkpoint_path, model)
            write_loss_csv(out_dir / "loss.csv", curve)
    return TrainResult(model=model, curve=curve, checkpoint_path=checkpoint_path)


def write_loss_csv(path, curve) -> None:
    with open(Path(path), "w") as f:
        f.write("epoch,train_loss,val_loss\n")
        for epoch, tr, va in curve:
            f.write(f"{epoch},{tr!r},{va!r}\n")


# -- rollout / evaluation ----------------------------------------------------------------


def rollout(model, seed_frames: np.ndarray, steps: int) -> np.ndarray:
    """Autoregressive prediction: predict the next frame, slide the window,
    repeat. Consumes only the seed window and its own (clamped) predictions.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    window = np.array(seed_frames, dtype=default_dtype())
    if window.shape[0] != model.in_frames:
        raise ValueError(f"seed window has {window.shape[0]} frames, model wants {model.in_frames}")
    model.eval()
    preds = []
    for _ in range(steps):
        nxt = np.clip(model.predict_next(window), 0.0, 1.0)
        preds.append(nxt)
        window = np.concatenate([window[1:], nxt[None]])
    return np.stack(preds)


def predict_rollouts(model, sequences, steps: int) -> np.ndarray:
    """Rollout predictions for every sequence; uses only the first
    ``model.in_frames`` frames of each."""
    m = model.in_frames
    out = []
    for seq in sequences:
        if len(seq.frames) < m + steps:
            raise ValueError(
                f"sequence of length {len(seq.frames)} too short for {m} seed frames + {steps} steps"
            )
        out.append(rollout(model, seq.frames[:m], steps))
    return np.stack(out)


def evaluate(model, sequences, steps: int = 5) -> tuple[metrics.EvalReport, metrics.EvalReport]:
    """Score rollout predictions and the persistence baseline per
    (sequence, step); returns (model report, persistence report)."""
    m = model.in_frames
    preds = predict_rollouts(model, sequences, steps)
    name = getattr(model, "kind", type(model).__name__)
    model_rows, persist_rows = [], []
    for si, seq in enumerate(sequences):
        last_seen = seq.frames[m - 1].astype(np.float64)
        for t in range(steps):
            target = seq.frames[m + t].astype(np.float64)
            r = metrics.score_pair(preds[si, t].astype(np.float64), target)
            model_rows.append(metrics.EvalRow(si, t + 1, r.mse, r.psnr, r.ssim))
            rp = metrics.score_pair(last_seen, target)
            persist_rows.append(metrics.EvalRow(si, t + 1, rp.mse, rp.psnr, rp.ssim))
    return (
        metrics.EvalReport(name, model_rows),
        metrics.EvalReport("persistence", persist_rows),
    )


def comparison_table(reports) -> str:
    """Aggregate PSNR/SSIM per configuration, highest-fidelity metrics last
    column; higher is better for both."""
    lines = [
        f"{'Configuration':<28} {'PSNR^':>10} {'SSIM^':>8}",
        "-" * 48,
    ]
    for report in reports:
        agg = report.aggregate()
        psnr_txt = "inf" if math.isinf(agg["psnr"]) else f"{agg['psnr']:.4f}"
        lines.append(f"{report.configuration:<28} {psnr_txt:>10} {agg['ssim']:>8.4f}")
    lines.append("(higher is better)")
    return "\n".join(lines)


# -- run manifests ---------------------------------------------------------------------------


def write_manifest(path, command: str, config: dict, seed: int, dataset_hash: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "dataset_hash": dataset_hash,
        "created_unix": time.time(),
        "version": _pkg_version(),
    }
    with open(Path(path), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _pkg_version() -> str:
    from . import __version__

    return f"axnow-{__version__}"
