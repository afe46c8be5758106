"""Desk-scale synthetic benchmark: train the axial-attention UNet plus the
UNet and ConvLSTM baselines on seeded synthetic advection sequences, evaluate
autoregressive rollouts against the persistence baseline, and format the
comparison table.

This is the harness behind both ``scripts/run_synthetic_benchmark.py`` and
the end-to-end acceptance test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data, training
from .metrics import EvalReport
from .models import AxialUNetSpec, ConvLSTMSpec, UNetSpec


@dataclass
class DeskSetup:
    """Desk-scale data and model configuration (32x32, small widths)."""

    size: int = 32
    length: int = 20
    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    data_seed: int = 2024
    train_seed: int = 7
    # synthetic-field character: smooth cells, visible advection, enough
    # sensor noise that copying the last frame is penalized
    noise: float = 0.15
    max_speed: float = 1.5
    sigma_range: tuple = (3.5, 5.5)
    amp_range: tuple = (0.4, 0.85)
    growth_range: tuple = (-0.02, 0.02)
    max_cells: int = 3
    eval_steps: int = 4


def make_desk_dataset(setup: DeskSetup) -> data.DatasetSplit:
    seqs = data.synth_generate(
        setup.n_train + setup.n_val + setup.n_test,
        length=setup.length,
        height=setup.size,
        width=setup.size,
        seed=setup.data_seed,
        max_cells=setup.max_cells,
        max_speed=setup.max_speed,
        noise=setup.noise,
        sigma_range=setup.sigma_range,
        amp_range=setup.amp_range,
        growth_range=setup.growth_range,
    )
    return data.split_sequences(
        seqs, seed=setup.data_seed, counts=(setup.n_train, setup.n_val, setup.n_test)
    )


def desk_axial_spec(setup: DeskSetup) -> AxialUNetSpec:
    return AxialUNetSpec(
        unet=UNetSpec(in_frames=1, channel_plan=(1, 8, 16, 32), out_channels=16),
        in_frames=16,
        height=setup.size,
        width=setup.size,
        attn_channels=16,
        l_upper=2,
        l_row=2,
        heads=4,
        bins=16,
    )


def desk_unet_spec(setup: DeskSetup) -> UNetSpec:
    return UNetSpec(in_frames=16, channel_plan=(16, 24, 32, 48), out_channels=1)


def desk_convlstm_spec(setup: DeskSetup) -> ConvLSTMSpec:
    return ConvLSTMSpec(layers=3, hidden_channels=8, in_frames=15)


@dataclass
class BenchmarkResult:
    split: data.DatasetSplit
    curves: dict
    reports: dict  # configuration -> EvalReport
    persistence: EvalReport
    wall_times: dict
    table: str


def run_desk_benchmark(
    setup: DeskSetup | None = None,
    models: tuple = ("axial-unet", "unet", "convlstm"),
    out_dir: Path | None = None,
    verbose: bool = False,
) -> BenchmarkResult:
    """Train and evaluate the requested models on one shared desk dataset.

    Every model trains with its standard hyperparameters (epochs, batch
    size, learning rate) at desk-scale widths, then rolls out
    ``setup.eval_steps`` frames on the test split. The persistence baseline
    is evaluated with a 16-frame window so its rows align with the UNet
    variants.
    """
    setup = setup or DeskSetup()
    split = make_desk_dataset(setup)
    specs = {
        "axial-unet": desk_axial_spec(setup),
        "unet": desk_unet_spec(setup),
        "convlstm": desk_convlstm_spec(setup),
    }
    curves: dict = {}
    reports: dict = {}
    wall_times: dict = {}
    persistence_report = None
    for kind in models:
        config = training.default_train_config(kind)
        config.seed = setup.train_seed
        t0 = time.time()
        run_dir = Path(out_dir) / kind if out_dir is not None else None
        result = training.train(specs[kind], config, split, out_dir=run_dir)
        wall_times[kind] = time.time() - t0
        curves[kind] = result.curve
        if verbose:
            first, last = result.curve[0], result.curve[-1]
            print(
                f"[{kind}] {config.epochs} epochs in {wall_times[kind]:.0f}s; "
                f"train loss {first[1]:.5f} -> {last[1]:.5f}"
            )
        report, persist = training.evaluate(result.model, split.test, steps=setup.eval_steps)
        reports[kind] = report
        if persistence_report is None:
            persistence_report = persist
    table = training.comparison_table(list(reports.values()) + [persistence_report])
    if verbose:
        print(table)
    return BenchmarkResult(
        split=split,
        curves=curves,
        reports=reports,
        persistence=persistence_report,
        wall_times=wall_times,
        table=table,
    )
