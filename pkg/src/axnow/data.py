"""Radar frame preprocessing pipeline and the synthetic stand-in generator.

Real data flows folder -> ingest -> chunk -> quality_filter -> normalize ->
split -> packed container. Frames stay uint8 through the quality filter (the
pixel-sum statistics are exact integers) and become float32 in [0, 1] after
normalization.

Sequence container ("AXSQ"): little-endian header
    magic "AXSQ" | u32 version | u32 n_train | u32 n_val | u32 n_test
    | u32 L | u32 H | u32 W
then one (u32 source-id length, utf-8 source id, u32 start index) record per
sequence in train/val/test order, then all frames as little-endian float32.
Round-trips are bit-exact.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .rng import SplitMix64

log = logging.getLogger(__name__)

AXSQ_MAGIC = b"AXSQ"
AXSQ_VERSION = 1

IMAGE_EXTENSIONS = {".png", ".pgm"}


class PipelineError(Exception):
    pass


class FolderRejected(PipelineError):
    """Folder has fewer decodable frames than the required count."""


@dataclass
class RawFolder:
    path: str
    frames: list  # uint8 [H, W] arrays, time order


@dataclass(eq=False)
class FrameSequence:
    """A fixed-length run of frames from one source.

    ``frames`` is [L, H, W]; uint8 straight out of chunking, float32 in
    [0, 1] after normalization. Instances compare by identity (the frames
    array makes value equality ill-defined).
    """

    frames: np.ndarray
    source_id: str
    start_index: int


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    seed: int = 0

    def all_sequences(self) -> list:
        return list(self.train) + list(self.val) + list(self.test)


# -- ingestion -----------------------------------------------------------------


def ingest(folder, size: int = 128, frames_per_folder: int = 240) -> RawFolder:
    """Read a folder of grayscale frames in lexicographic order.

    Frames are converted to single-channel and bilinearly resized to
    ``size`` x ``size``. Folders with fewer than ``frames_per_folder``
    decodable frames are rejected; longer folders are truncated to the first
    ``frames_per_folder`` frames. Undecodable files are skipped with a
    warning; a folder with no decodable frames is an error.
    """
    folder = Path(folder)
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    frames: list[np.ndarray] = []
    decode_failures = 0
    for p in files:
        if len(frames) >= frames_per_folder:
            break
        try:
            with Image.open(p) as img:
                img = img.convert("L")
                if img.size != (size, size):
                    img = img.resize((size, size), Image.BILINEAR)
                frames.append(np.asarray(img, dtype=np.uint8))
        except Exception as exc:  # undecodable image: skip with warning
            decode_failures += 1
            log.warning("skipping undecodable image %s: %s", p, exc)
    if not frames:
        raise PipelineError(f"{folder}: no decodable grayscale images found")
    if len(frames) < frames_per_folder:
        raise FolderRejected(
            f"{folder}: {len(frames)} frames < required {frames_per_folder}"
        )
    return RawFolder(path=str(folder), frames=frames)


def chunk(raw: RawFolder, length: int = 20) -> list:
    """Split into consecutive non-overlapping sequences; remainder dropped."""
    n = len(raw.frames) // length
    source = Path(raw.path).name
    out = []
    for i in range(n):
        block = np.stack(raw.frames[i * length : (i + 1) * length])
        out.append(FrameSequence(frames=block, source_id=source, start_index=i * length))
    return out


# -- quality filtering ----------------------------------------------------------------


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile between closest ranks."""
    s = sorted(float(v) for v in values)
    if not s:
        raise PipelineError("percentile of empty list")
    rank = (len(s) - 1) * q / 100.0
    lo = int(np.floor(rank))
    frac = rank - lo
    if frac == 0.0:
        return s[lo]
    return s[lo] + frac * (s[lo + 1] - s[lo])


def frame_sums(seqs) -> list:
    """Per-frame pixel sums over every frame of every sequence."""
    return [float(frame.sum(dtype=np.float64)) for seq in seqs for frame in seq.frames]


def quality_bounds(seqs) -> tuple[float, float]:
    """25th and 75th percentile of the corpus-wide per-frame pixel sums."""
    sums = frame_sums(seqs)
    return percentile(sums, 25.0), percentile(sums, 75.0)


def quality_filter(seqs, bad_limit: int = 10) -> list:
    """Drop sequences with more than ``bad_limit`` out-of-range frames.

    A frame is bad iff its pixel sum lies strictly outside the corpus-wide
    [25th, 75th] percentile band. Sequences are never trimmed or reordered;
    the result is a subsequence of the input list.
    """
    if not seqs:
        raise PipelineError("quality_filter needs at least one sequence")
    lower, upper = quality_bounds(seqs)
    kept = []
    for seq in seqs:
        sums = np.asarray([f.sum(dtype=np.float64) for f in seq.frames])
        bad = int(np.count_nonzero((sums < lower) | (sums > upper)))
        if bad <= bad_limit:
            kept.append(seq)
    return kept


# -- normalization / packing -----------------------------------------------------------


def normalize_sequences(seqs) -> list:
    """uint8 frames -> float32 in [0, 1] (divide by 255)."""
    out = []
    for seq in seqs:
        if seq.frames.dtype != np.uint8:
            raise PipelineError(f"normalize expects uint8 frames, got {seq.frames.dtype}")
        out.append(
            FrameSequence(
                frames=(seq.frames.astype(np.float32) / np.float32(255.0)),
                source_id=seq.source_id,
                start_index=seq.start_index,
            )
        )
    return out


def _validate_packed(seqs) -> tuple[int, int, int]:
    shapes = {s.frames.shape for s in seqs}
    if len(shapes) > 1:
        raise PipelineError(f"sequences disagree on shape: {sorted(shapes)}")
    for s in seqs:
        if s.frames.dtype != np.float32:
            raise PipelineError("packed frames must be float32")
        if s.frames.min() < 0.0 or s.frames.max() > 1.0:
            raise PipelineError("packed frames must lie in [0, 1]")
    return shapes.pop()


def write_axsq(path, split: DatasetSplit) -> None:
    seqs = split.all_sequences()
    if not seqs:
        raise PipelineError("refusing to write an empty dataset")
    length, height, width = _validate_packed(seqs)
    with open(Path(path), "wb") as f:
        f.write(AXSQ_MAGIC)
        f.write(
            struct.pack(
                "<7I",
                AXSQ_VERSION,
                len(split.train),
                len(split.val),
                len(split.test),
                length,
                height,
                width,
            )
        )
        for seq in seqs:
            sid = seq.source_id.encode("utf-8")
            f.write(struct.pack("<I", len(sid)))
            f.write(sid)
            f.write(struct.pack("<I", seq.start_index))
        for seq in seqs:
            f.write(seq.frames.astype("<f4", copy=False).tobytes())


def read_axsq(path) -> DatasetSplit:
    raw = Path(path).read_bytes()
    if raw[:4] != AXSQ_MAGIC:
        raise PipelineError(f"{path}: not a sequence container (bad magic {raw[:4]!r})")
    version, n_train, n_val, n_test, length, height, width = struct.unpack_from("<7I", raw, 4)
    if version != AXSQ_VERSION:
        raise PipelineError(f"{path}: unsupported container version {version}")
    off = 4 + 7 * 4
    total = n_train + n_val + n_test
    meta = []
    for _ in range(total):
        (slen,) = struct.unpack_from("<I", raw, off)
        off += 4
        sid = raw[off : off + slen].decode("utf-8")
        off += slen
        (start,) = struct.unpack_from("<I", raw, off)
        off += 4
        meta.append((sid, start))
    per_seq = length * height * width
    frames = np.frombuffer(raw, dtype="<f4", count=total * per_seq, offset=off)
    frames = frames.astype(np.float32, copy=True).reshape(total, length, height, width)
    seqs = [
        FrameSequence(frames=frames[i], source_id=meta[i][0], start_index=meta[i][1])
        for i in range(total)
    ]
    return DatasetSplit(
        train=seqs[:n_train],
        val=seqs[n_train : n_train + n_val],
        test=seqs[n_train + n_val :],
    )


# -- splitting --------------------------------------------------------------------------


def split_sequences(seqs, seed: int, counts: tuple | None = None) -> DatasetSplit:
    """Deterministic seeded shuffle (SplitMix64 Fisher-Yates) and partition.

    Default partition: val 500 / test 400 with everything else in train when
    at least 2900 sequences are available, otherwise proportional 69/17/14
    (val = floor(0.17 n), test = floor(0.14 n), leftover to train). Explicit
    ``counts`` = (train, val, test) overrides the rule.
    """
    seqs = list(seqs)
    n = len(seqs)
    order = list(range(n))
    SplitMix64(seed).shuffle(order)
    shuffled = [seqs[i] for i in order]
    if counts is None:
        if n >= 2900:
            n_val, n_test = 500, 400
        else:
            n_val, n_test = int(np.floor(0.17 * n)), int(np.floor(0.14 * n))
        n_train = n - n_val - n_test
    else:
        n_train, n_val, n_test = counts
        if n_train + n_val + n_test != n:
            raise PipelineError(f"counts {counts} do not sum to {n} sequences")
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


# -- synthetic advection data --------------------------------------------------------------


def render_sequence(
    cells,
    velocity,
    length: int,
    height: int,
    width: int,
    noise: float = 0.0,
    noise_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Render advecting Gaussian cells on a torus.

    ``cells``: iterable of (cy, cx, sigma, amplitude, growth); each frame t
    draws every cell at amplitude clip(a * (1 + growth * t), 0, 1) centered
    at its start plus t * velocity, with wrap-around distances. ``velocity``
    is (dx, dy) pixels/frame: (1, 0) shifts the image one column per frame.
    Optional additive uniform noise in [-noise, noise], then clamp to [0, 1].
    """
    vx, vy = float(velocity[0]), float(velocity[1])
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = np.empty((length, height, width), dtype=np.float32)
    for t in range(length):
        img = np.zeros((height, width), dtype=np.float64)
        for cy, cx, sigma, amp, growth in cells:
            a = float(np.clip(amp * (1.0 + growth * t), 0.0, 1.0))
            py = cy + vy * t
            px = cx + vx * t
            dy = ((yy - py + height / 2.0) % height) - height / 2.0
            dx = ((xx - px + width / 2.0) % width) - width / 2.0
            img += a * np.exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma))
        if noise > 0.0 and noise_rng is not None:
            img = img + noise_rng.uniform(-noise, noise, size=(height, width))
        frames[t] = np.clip(img, 0.0, 1.0).astype(np.float32)
    return frames


def synth_generate(
    n_seqs: int,
    length: int = 20,
    height: int = 32,
    width: int = 32,
    seed: int = 0,
    max_cells: int = 3,
    max_speed: float = 1.5,
    noise: float = 0.10,
    sigma_range: tuple = (3.0, 5.0),
    amp_range: tuple = (0.35, 0.8),
    growth_range: tuple = (-0.02, 0.02),
) -> list:
    """Seed-deterministic synthetic radar sequences (1..max_cells Gaussian
    cells advecting with a constant per-sequence velocity, linear intensity
    growth/decay, additive clamped noise)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_seqs):
        k = int(rng.integers(1, max_cells + 1))
        velocity = rng.uniform(-max_speed, max_speed, size=2)
        cells = [
            (
                rng.uniform(0, height),
                rng.uniform(0, width),
                rng.uniform(*sigma_range),
                rng.uniform(*amp_range),
                rng.uniform(*growth_range),
            )
            for _ in range(k)
        ]
        frames = render_sequence(
            cells, velocity, length, height, width, noise=noise, noise_rng=rng
        )
        out.append(FrameSequence(frames=frames, source_id=f"synth-{i}", start_index=0))
    return out


# -- display-path image files -------------------------------------------------------------


def write_pgm(path, image_u8: np.ndarray) -> None:
    """Binary (P5) PGM, display scaling only."""
    image_u8 = np.asarray(image_u8, dtype=np.uint8)
    h, w = image_u8.shape
    with open(Path(path), "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image_u8.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise PipelineError(f"{path}: not a binary PGM file")
    parts = raw.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=h * w).reshape(h, w)
