"""CLI contracts: subcommand behavior, exit codes, file outputs, display
quantization bounds."""

import numpy as np
import pytest
from PIL import Image

from axnow import cli, data, metrics


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def synth_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("ds") / "demo.axsq"
    code = run(
        [
            "synth", "--out", str(path), "--n-seqs", "12", "--length", "20",
            "--size", "16", "--seed", "3", "--counts", "8,2,2",
        ]
    )
    assert code == 0
    return path


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, synth_dataset):
    out = tmp_path_factory.mktemp("run")
    code = run(
        [
            "train", str(synth_dataset), "--model", "convlstm", "--epochs", "1",
            "--hidden-channels", "3", "--seed", "1", "--out", str(out),
        ]
    )
    assert code == 0
    return out


class TestSynth:
    def test_writes_split_container(self, synth_dataset):
        split = data.read_axsq(synth_dataset)
        assert (len(split.train), len(split.val), len(split.test)) == (8, 2, 2)

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.axsq", tmp_path / "b.axsq"
        for path in (a, b):
            assert run(["synth", "--out", str(path), "--n-seqs", "5", "--size", "16", "--seed", "7"]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestPreprocess:
    def _corpus(self, tmp_path, n_folders=2, frames=40, size=12):
        root = tmp_path / "corpus"
        root.mkdir()
        rng = np.random.default_rng(0)
        for f in range(n_folders):
            folder = root / f"folder{f:03d}"
            folder.mkdir()
            for i in range(frames):
                arr = rng.integers(90, 160, size=(size, size), dtype=np.uint8)
                Image.fromarray(arr, mode="L").save(folder / f"{i:04d}.png")
        return root

    def test_pipeline_counts_and_output(self, tmp_path, capsys):
        root = self._corpus(tmp_path, n_folders=2, frames=45)
        out = tmp_path / "real.axsq"
        code = run(
            [
                "preprocess", str(root), "--out", str(out), "--size", "12",
                "--seq-len", "10", "--frames-per-folder", "40", "--seed", "1",
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        # 2 folders x 40 frames -> 4 sequences each of length 10
        assert "folders scanned: 2; kept: 2; rejected: 0" in printed
        assert "sequences of length 10: 8" in printed
        split = data.read_axsq(out)
        assert len(split.all_sequences()) <= 8
        for seq in split.all_sequences():
            assert seq.frames.shape == (10, 12, 12)
            assert 0.0 <= seq.frames.min() and seq.frames.max() <= 1.0

    def test_rerun_is_bit_identical(self, tmp_path):
        root = self._corpus(tmp_path, n_folders=1, frames=40)
        a, b = tmp_path / "a.axsq", tmp_path / "b.axsq"
        for out in (a, b):
            assert run(
                [
                    "preprocess", str(root), "--out", str(out), "--size", "12",
                    "--seq-len", "10", "--frames-per-folder", "40", "--seed", "5",
                ]
            ) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_input_dir_is_usage_error(self, tmp_path):
        assert run(["preprocess", str(tmp_path / "nope"), "--out", str(tmp_path / "o.axsq")]) == 2


class TestTrain:
    def test_run_directory_contents(self, trained_run):
        assert (trained_run / "checkpoint.axnw").is_file()
        assert (trained_run / "loss.csv").is_file()
        assert (trained_run / "manifest.json").is_file()
        import json

        manifest = json.loads((trained_run / "manifest.json").read_text())
        assert manifest["seed"] == 1
        assert "dataset_hash" in manifest and len(manifest["dataset_hash"]) == 64

    def test_missing_dataset_argument_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["train", "--model", "unet"])
        assert exc.value.code == 2

    def test_unknown_model_is_usage_error(self, synth_dataset):
        with pytest.raises(SystemExit) as exc:
            run(["train", str(synth_dataset), "--model", "resnet"])
        assert exc.value.code == 2

    def test_nonexistent_dataset_path(self, tmp_path):
        assert run(["train", str(tmp_path / "missing.axsq"), "--model", "unet"]) == 2


class TestEvaluate:
    def test_prints_table_and_persistence(self, trained_run, synth_dataset, capsys):
        code = run(["evaluate", str(trained_run / "checkpoint.axnw"), str(synth_dataset), "--steps", "5"])
        assert code == 0
        printed = capsys.readouterr().out
        assert "PSNR" in printed and "SSIM" in printed
        assert "higher is better" in printed
        assert "persistence" in printed
        assert "summary:" in printed

    def test_report_rows(self, trained_run, synth_dataset, tmp_path):
        report_path = tmp_path / "rep.csv"
        code = run(
            [
                "evaluate", str(trained_run / "checkpoint.axnw"), str(synth_dataset),
                "--steps", "5", "--report", str(report_path),
            ]
        )
        assert code == 0
        rep = metrics.EvalReport.load(report_path)
        assert len(rep.rows) == 2 * 5  # test split has 2 sequences
        assert report_path.with_suffix(".persistence.csv").is_file()

    def test_dim_mismatch_names_both_shapes(self, synth_dataset, tmp_path, capsys):
        # axial models carry learned position embeddings pinned to H x W
        run_dir = tmp_path / "axrun"
        assert run(
            [
                "train", str(synth_dataset), "--model", "axial-unet", "--epochs", "1",
                "--feature-plan", "1,2,4", "--attn-channels", "4", "--bins", "4",
                "--l-row", "1", "--heads", "2", "--out", str(run_dir),
            ]
        ) == 0
        other = tmp_path / "other.axsq"
        assert run(
            ["synth", "--out", str(other), "--n-seqs", "6", "--size", "32", "--seed", "0",
             "--counts", "2,2,2"]
        ) == 0
        code = run(["evaluate", str(run_dir / "checkpoint.axnw"), str(other)])
        assert code == 1
        err = capsys.readouterr().err
        assert "16" in err and "32" in err


class TestRender:
    def test_writes_target_output_pairs(self, trained_run, synth_dataset, tmp_path):
        out_dir = tmp_path / "rendered"
        code = run(
            [
                "render", str(trained_run / "checkpoint.axnw"), str(synth_dataset),
                "--sequence", "0", "--steps", "4", "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        files = sorted(p.name for p in out_dir.iterdir())
        assert files == [
            "output_1.pgm", "output_2.pgm", "output_3.pgm", "output_4.pgm",
            "target_1.pgm", "target_2.pgm", "target_3.pgm", "target_4.pgm",
        ]

    def test_pixels_are_rounded_display_values(self, trained_run, synth_dataset, tmp_path):
        out_dir = tmp_path / "rendered2"
        assert run(
            [
                "render", str(trained_run / "checkpoint.axnw"), str(synth_dataset),
                "--sequence", "1", "--steps", "1", "--out-dir", str(out_dir),
            ]
        ) == 0
        split = data.read_axsq(synth_dataset)
        target = split.test[1].frames[15]
        rendered = data.read_pgm(out_dir / "target_1.pgm")
        assert np.array_equal(rendered, np.rint(255.0 * target).astype(np.uint8))

    def test_display_path_is_lossy_but_bounded(self, trained_run, synth_dataset, tmp_path):
        # re-reading the rendered file quantizes: PSNR against the continuous
        # field stays above the uniform-quantization floor (worst case
        # -10*log10((1/255)^2 / 4) ~= 54.2 dB, typically ~58.9 dB)
        out_dir = tmp_path / "rendered3"
        assert run(
            [
                "render", str(trained_run / "checkpoint.axnw"), str(synth_dataset),
                "--sequence", "0", "--steps", "1", "--out-dir", str(out_dir),
            ]
        ) == 0
        split = data.read_axsq(synth_dataset)
        target = split.test[0].frames[15].astype(np.float64)
        back = data.read_pgm(out_dir / "target_1.pgm").astype(np.float64) / 255.0
        assert not np.array_equal(back, target)  # display path is lossy
        assert metrics.psnr(back, target) > 54.0

    def test_bad_sequence_id_lists_range(self, trained_run, synth_dataset, capsys):
        code = run(
            [
                "render", str(trained_run / "checkpoint.axnw"), str(synth_dataset),
                "--sequence", "99", "--steps", "1", "--out-dir", "/tmp/never",
            ]
        )
        assert code == 1
        assert "0..1" in capsys.readouterr().err
