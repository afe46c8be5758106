"""Command-line entry point.

Subcommands cover the pipeline end to end: ``preprocess`` real frame
folders or ``synth``-esize a dataset into the AXSQ container, ``train`` a
model into a run directory (checkpoint + loss CSV + manifest), ``evaluate``
rollouts against the persistence baseline, and ``render`` target/output
frame pairs as PGM files.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import data, training
from .models import (
    AxialUNetSpec,
    CGanSpec,
    ConvLSTMSpec,
    Persistence,
    UNetSpec,
    load_model,
)

MODEL_KINDS = ("unet", "axial-unet", "convlstm", "cgan")


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _run_root() -> Path:
    return Path(os.environ.get("AXNOW_RUN_ROOT", "runs"))


# -- preprocess ---------------------------------------------------------------


def cmd_preprocess(args) -> int:
    root = Path(args.input_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"input directory {root} does not exist")
    folders = sorted(p for p in root.iterdir() if p.is_dir()) or [root]
    kept_folders, rejected = [], 0
    for folder in folders:
        try:
            kept_folders.append(
                data.ingest(folder, size=args.size, frames_per_folder=args.frames_per_folder)
            )
        except data.FolderRejected:
            rejected += 1
    print(f"folders scanned: {len(folders)}; kept: {len(kept_folders)}; rejected: {rejected}")
    if not kept_folders:
        raise data.PipelineError("no folder provided enough frames")
    sequences = []
    for raw in kept_folders:
        sequences.extend(data.chunk(raw, length=args.seq_len))
    print(f"sequences of length {args.seq_len}: {len(sequences)}")
    lower, upper = data.quality_bounds(sequences)
    kept = data.quality_filter(sequences, bad_limit=args.bad_limit)
    print(f"pixel-sum percentile band: [{lower:.1f}, {upper:.1f}]")
    print(f"sequences after quality filter: {len(kept)} (dropped {len(sequences) - len(kept)})")
    normalized = data.normalize_sequences(kept)
    split = data.split_sequences(normalized, seed=args.seed)
    print(f"split: train {len(split.train)} / val {len(split.val)} / test {len(split.test)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_axsq(out, split)
    print(f"wrote {out} (sha256 {_sha256(out)[:16]}...)")
    return 0


# -- synth ---------------------------------------------------------------------


def cmd_synth(args) -> int:
    seqs = data.synth_generate(
        args.n_seqs,
        length=args.length,
        height=args.size,
        width=args.size,
        seed=args.seed,
        max_speed=args.max_speed,
        noise=args.noise,
    )
    counts = _ints(args.counts) if args.counts else None
    split = data.split_sequences(seqs, seed=args.seed, counts=counts)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_axsq(out, split)
    print(
        f"wrote {out}: {args.n_seqs} sequences {args.length}x{args.size}x{args.size}, "
        f"split {len(split.train)}/{len(split.val)}/{len(split.test)}"
    )
    return 0


# -- train --------------------------------------------------------------------------


def _build_spec(args, length: int, height: int, width: int):
    kind = args.model
    if kind == "unet":
        plan = _ints(args.channel_plan)
        return UNetSpec(in_frames=plan[0], channel_plan=plan, out_channels=1)
    if kind == "axial-unet":
        plan = _ints(args.feature_plan)
        return AxialUNetSpec(
            unet=UNetSpec(in_frames=1, channel_plan=plan, out_channels=args.attn_channels),
            in_frames=args.input_frames if args.input_frames else 16,
            height=height,
            width=width,
            attn_channels=args.attn_channels,
            l_upper=args.l_upper,
            l_row=args.l_row,
            heads=args.heads,
            bins=args.bins,
        )
    if kind == "convlstm":
        return ConvLSTMSpec(
            layers=args.layers,
            hidden_channels=args.hidden_channels,
            in_frames=args.input_frames if args.input_frames else 15,
        )
    if kind == "cgan":
        plan = _ints(args.gen_plan)
        return CGanSpec(
            generator=UNetSpec(in_frames=plan[0], channel_plan=plan, out_channels=plan[0]),
            disc_filters=_ints(args.disc_filters),
            lambda_l1=args.lambda_l1,
            height=height,
            width=width,
        )
    raise ValueError(f"unknown model {kind!r}")


def cmd_train(args) -> int:
    dataset_path = Path(args.dataset)
    if not dataset_path.is_file():
        raise FileNotFoundError(f"dataset {dataset_path} does not exist")
    split = data.read_axsq(dataset_path)
    length, height, width = split.all_sequences()[0].frames.shape
    spec = _build_spec(args, length, height, width)
    config = training.default_train_config(args.model)
    config.seed = args.seed
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.lr is not None:
        config.lr = args.lr
    if args.batch is not None:
        config.batch_size = args.batch
    if args.input_frames is not None:
        config.input_frames = args.input_frames
    needed = config.input_frames + (config.input_frames if args.model == "cgan" else 1)
    if length < needed:
        raise ValueError(
            f"sequences of length {length} are too short: {args.model} needs {needed} frames"
        )
    out_dir = Path(args.out) if args.out else _run_root() / f"{args.model}-seed{args.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    result = training.train(spec, config, split, out_dir=out_dir)
    training.write_manifest(
        out_dir / "manifest.json",
        command=" ".join(sys.argv),
        config={**vars(config), "spec": str(spec)},
        seed=args.seed,
        dataset_hash=_sha256(dataset_path),
    )
    first, last = result.curve[0], result.curve[-1]
    print(f"trained {args.model}: train loss {first[1]:.6f} -> {last[1]:.6f}")
    print(f"run directory: {out_dir}")
    return 0


# -- evaluate ----------------------------------------------------------------------------


def _pick_split(split: data.DatasetSplit, which: str):
    seqs = getattr(split, which)
    if not seqs:
        raise ValueError(f"dataset has no {which} sequences")
    return seqs


def _load_model_checked(checkpoint: Path, height: int, width: int):
    if not Path(checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {checkpoint} does not exist")
    model = load_model(checkpoint)
    spec = model.spec
    expected = (getattr(spec, "height", height), getattr(spec, "width", width))
    if expected != (height, width):
        raise ValueError(
            f"checkpoint expects {expected[0]}x{expected[1]} frames "
            f"but the dataset holds {height}x{width}"
        )
    return model

def cmd_evaluate(args) -> int:
    dataset_path = Path(args.dataset)
    if not dataset_path.is_file():
        raise FileNotFoundError(f"dataset {dataset_path} does not exist")
    split = data.read_axsq(dataset_path)
    seqs = _pick_split(split, args.split)
    length, height, width = seqs[0].frames.shape
    model = _load_model_checked(args.checkpoint, height, width)
    report, persist = training.evaluate(model, seqs, steps=args.steps)
    for step in report.steps():
        a = report.step_aggregate(step)
        p = persist.step_aggregate(step)
        print(
            f"step {step}: model psnr {a['psnr']:.4f} ssim {a['ssim']:.4f} | "
            f"persistence psnr {p['psnr']:.4f} ssim {p['ssim']:.4f}"
        )
    print(training.comparison_table([report, persist]))
    agg = report.aggregate()
    print(
        f"summary: {report.configuration} mean PSNR {agg['psnr']:.4f} dB, "
        f"mean SSIM {agg['ssim']:.4f} over {len(report.rows)} rows"
    )
    if args.report:
        report.save(args.report)
        persist.save(Path(args.report).with_suffix(".persistence.csv"))
        print(f"wrote {args.report}")
    return 0


# -- render -------------------------------------------------------------------------------


def cmd_render(args) -> int:
    dataset_path = Path(args.dataset)
    if not dataset_path.is_file():
        raise FileNotFoundError(f"dataset {dataset_path} does not exist")
    split = data.read_axsq(dataset_path)
    seqs = _pick_split(split, args.split)
    if not 0 <= args.sequence < len(seqs):
        raise ValueError(
            f"sequence id {args.sequence} out of range: valid ids are 0..{len(seqs) - 1}"
        )
    seq = seqs[args.sequence]
    length, height, width = seq.frames.shape
    model = _load_model_checked(args.checkpoint, height, width)
    m = model.in_frames
    if length < m + args.steps:
        raise ValueError(f"sequence too short for {m} seed frames + {args.steps} steps")
    preds = training.rollout(model, seq.frames[:m], args.steps)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(args.steps):
        target = seq.frames[m + t]
        # display scaling only; metrics always use the continuous fields
        data.write_pgm(out_dir / f"target_{t + 1}.pgm", np.rint(255.0 * target).astype(np.uint8))
        data.write_pgm(out_dir / f"output_{t + 1}.pgm", np.rint(255.0 * preds[t]).astype(np.uint8))
    print(f"wrote {2 * args.steps} PGM files to {out_dir}")
    return 0


# -- parser ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axnow",
        description="Radar nowcasting toolkit: preprocess, train, evaluate, render.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="frame folders -> filtered, split AXSQ dataset")
    p.add_argument("input_dir")
    p.add_argument("--out", required=True, help="output .axsq path")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seq-len", type=int, default=20)
    p.add_argument("--bad-limit", type=int, default=10)
    p.add_argument("--frames-per-folder", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate a synthetic advection dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-seqs", type=int, default=300)
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.10)
    p.add_argument("--max-speed", type=float, default=1.5)
    p.add_argument("--counts", default="", help="explicit train,val,test counts")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on an AXSQ dataset")
    p.add_argument("dataset")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-frames", type=int)
    p.add_argument("--out", help="run directory (default $AXNOW_RUN_ROOT/<model>-seed<seed>)")
    p.add_argument("--channel-plan", default="16,64,128,256", help="unet encoder channels")
    p.add_argument("--feature-plan", default="1,64,128,256", help="axial-unet per-frame extractor channels")
    p.add_argument("--attn-channels", type=int, default=32)
    p.add_argument("--l-upper", type=int, default=2)
    p.add_argument("--l-row", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--bins", type=int, default=128)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden-channels", type=int, default=64)
    p.add_argument("--gen-plan", default="4,64,128,256")
    p.add_argument("--disc-filters", default="64,128,256,512")
    p.add_argument("--lambda-l1", type=float, default=100.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rollout metrics vs the persistence baseline")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--report", help="write the per-row EvalReport CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="write target/output PGM pairs for one sequence")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--sequence", type=int, required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
