"""Finite-difference gradient checking.

Central differences with h=1e-4 in float64, compared with a guarded
relative error |a - n| / max(|a|, |n|, 1e-3) so near-zero coordinates are
judged on an absolute scale.

A central difference is only a valid derivative estimate where the function
is smooth across [x-h, x+h]. Piecewise-linear points (relu/leaky-relu
kinks, |.| ties, maxpool argmax switches) make the h-step and h/4-step
estimates disagree, so such coordinates are detected via that consistency
pair and resampled. A genuinely wrong analytic gradient produces
*consistent* finite differences that still disagree with it, and fails.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def check_gradients(
    build_loss: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    rng: np.random.Generator,
    n_samples: int = 100,
    h: float = 1e-4,
    guard: float = 1e-3,
) -> float:
    """Compare analytic gradients of ``build_loss()`` against central
    finite differences on randomly sampled coordinates of ``tensors``.

    ``build_loss`` must be a pure function of the current tensor values.
    Returns the maximum guarded relative error over the sampled smooth
    coordinates (``n_samples`` of them when enough are available).
    """
    tensors = list(tensors)
    for t in tensors:
        t.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    sizes = np.array([t.data.size for t in tensors])
    total = int(sizes.sum())
    order = rng.permutation(total)
    bounds = np.cumsum(sizes)

    def fd(flat: np.ndarray, local: int, step: float) -> float:
        orig = flat[local]
        flat[local] = orig + step
        f_plus = build_loss().item()
        flat[local] = orig - step
        f_minus = build_loss().item()
        flat[local] = orig
        return (f_plus - f_minus) / (2.0 * step)

    max_err = 0.0
    checked = 0
    want = min(n_samples, total)
    for fi in order:
        if checked >= want:
            break
        ti = int(np.searchsorted(bounds, fi, side="right"))
        local = int(fi - (bounds[ti - 1] if ti else 0))
        flat = tensors[ti].data.reshape(-1)
        numeric = fd(flat, local, h)
        confirm = fd(flat, local, h / 4.0)
        scale = max(abs(numeric), abs(confirm), guard)
        if abs(numeric - confirm) / scale > 1e-4:
            continue  # kink inside the probed interval: estimate invalid here
        a = analytic[ti].reshape(-1)[local]
        err = abs(a - numeric) / max(abs(a), abs(numeric), guard)
        max_err = max(max_err, err)
        checked += 1
    if checked < want:
        raise RuntimeError(
            f"only {checked}/{want} sampled coordinates were smooth enough to check"
        )
    return max_err
