"""Checkpoint container: bit-exact round-trips, config embedding, model
save/load."""

import numpy as np
import pytest

from axnow.checkpoint import load_checkpoint, save_checkpoint
from axnow.models import (
    CGanSpec,
    ConvLSTMSpec,
    UNetSpec,
    build_model,
    load_model,
    save_model,
    spec_from_config,
    spec_to_config,
)


def test_raw_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    records = {
        "a.weight": rng.normal(size=(3, 4, 5)),
        "b.bias": rng.normal(size=(7,)).astype(np.float32),
        "scalarish": rng.normal(size=(1,)),
    }
    config = {"kind": "demo", "note": "k=v pairs", "n": "3"}
    path = tmp_path / "x.axnw"
    save_checkpoint(path, config, records)
    cfg2, rec2 = load_checkpoint(path)
    assert cfg2 == config
    assert list(rec2) == list(records)
    for name, arr in records.items():
        assert rec2[name].dtype == arr.dtype
        assert rec2[name].tobytes() == arr.tobytes()


def test_magic_and_version_checked(tmp_path):
    p = tmp_path / "bad.axnw"
    p.write_bytes(b"XXXX" + b"\0" * 16)
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_header_is_human_readable(tmp_path):
    model = build_model(UNetSpec(4, (4, 8, 16), 1), seed=0)
    path = tmp_path / "m.axnw"
    save_model(path, model)
    head = path.read_bytes()[:200]
    assert head[:4] == b"AXNW"
    assert b"kind=unet" in head
    assert b"channel_plan=4,8,16" in head


@pytest.mark.parametrize(
    "spec",
    [
        UNetSpec(4, (4, 8, 16), 1),
        ConvLSTMSpec(layers=2, hidden_channels=3, in_frames=5),
        CGanSpec(
            generator=UNetSpec(in_frames=2, channel_plan=(2, 4, 8), out_channels=2),
            disc_filters=(3, 6),
            height=16,
            width=16,
        ),
    ],
)
def test_model_round_trip(spec, tmp_path):
    model = build_model(spec, seed=4)
    path = tmp_path / "model.axnw"
    save_model(path, model)
    back = load_model(path)
    assert spec_from_config(spec_to_config(model)) == spec
    for (na, pa), (nb, pb) in zip(model.named_parameters(), back.named_parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    for (na, ba), (nb, bb) in zip(model.named_buffers(), back.named_buffers()):
        assert na == nb
        assert np.array_equal(ba, bb)


def test_missing_parameter_detected(tmp_path):
    model = build_model(UNetSpec(4, (4, 8, 16), 1), seed=1)
    cfg = spec_to_config(model)
    records = {f"param/{n}": p.data for n, p in model.named_parameters()}
    records.pop("param/head.bias")
    path = tmp_path / "broken.axnw"
    save_checkpoint(path, cfg, records)
    with pytest.raises(ValueError, match="head.bias"):
        load_model(path)
