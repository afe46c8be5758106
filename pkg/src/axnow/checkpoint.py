"""Binary checkpoint container.

Layout (all integers little-endian):

    magic "AXNW" | u32 version | u32 config_len | config utf-8
    u32 n_records | records...

    record: u32 name_len | name utf-8 | u8 dtype (4 = f32, 8 = f64)
            | u32 ndim | u32 extents... | raw little-endian floats

The config block is human-readable "key=value" lines (the model spec).
Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AXNW"
VERSION = 1

_DTYPE_CODES = {np.dtype("float32"): 4, np.dtype("float64"): 8}
_CODE_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def encode_config(config: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in config.items())


def decode_config(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line:
            k, _, v = line.partition("=")
            out[k] = v
    return out


def save_checkpoint(path, config: dict, records: dict[str, np.ndarray]) -> None:
    """Write config plus named float arrays (parameters and buffers)."""
    path = Path(path)
    blob = encode_config(config).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(records)))
        for name, arr in records.items():
            arr = np.asarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise ValueError(f"record {name!r}: unsupported dtype {arr.dtype}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", _DTYPE_CODES[arr.dtype]))
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (config, name -> array)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic {raw[:4]!r})")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (clen,) = struct.unpack_from("<I", raw, off)
    off += 4
    config = decode_config(raw[off : off + clen].decode("utf-8"))
    off += clen
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    records: dict[str, np.ndarray] = {}
    for _ in range(n):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (code,) = struct.unpack_from("<B", raw, off)
        off += 1
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        dt = _CODE_DTYPES[code]
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=off).reshape(shape)
        off += count * dt.itemsize
        records[name] = arr.astype(dt.newbyteorder("="), copy=True)
    return config, records
