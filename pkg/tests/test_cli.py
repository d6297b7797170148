"""End-user command-line behavior: flags, outputs, exit codes."""

import json
import os

import numpy as np
import pytest
from conftest import make_manifest_dataset, smooth_field, synthetic_pair

from microgan import cli, dataset
from microgan.models import Generator
from microgan.train import save_checkpoint


def write_raw_pairs(root, n=2, lq_size=96, hq_size=80, unalignable=0):
    """Raw LQ/HQ directories with matchable filenames."""
    lq_dir, hq_dir = root / "raw_lq", root / "raw_hq"
    lq_dir.mkdir()
    hq_dir.mkdir()
    for i in range(n):
        field = smooth_field(lq_size, seed=200 + i, channels=3)
        rng = np.random.default_rng(300 + i)
        lq = np.clip(field + 0.05 * rng.standard_normal(field.shape), 0, 1)
        hq = dataset.center_crop(field, hq_size)
        dataset.save_image(lq_dir / f"field{i}.tif", lq.astype(np.float32))
        dataset.save_image(hq_dir / f"field{i}.tif", hq.astype(np.float32))
    for i in range(unalignable):
        bad_lq = smooth_field(lq_size, seed=900 + i, channels=3)
        bad_hq = smooth_field(hq_size, seed=950 + i, channels=3)
        dataset.save_image(lq_dir / f"bad{i}.tif", bad_lq)
        dataset.save_image(hq_dir / f"bad{i}.tif", bad_hq)
    return lq_dir, hq_dir


def prepare_args(lq_dir, hq_dir, out_dir, **extra):
    args = [
        "prepare", "--lq-dir", str(lq_dir), "--hq-dir", str(hq_dir),
        "--out-dir", str(out_dir), "--target-size", "64",
    ]
    for key, val in extra.items():
        args += [f"--{key.replace('_', '-')}", str(val)]
    return args


TRAIN_SMALL = [
    "--base-channels", "2", "--fc-hidden", "8", "--channel-cap", "8",
    "--learning-rate", "1e-3",
]


class TestHelp:
    @pytest.mark.parametrize(
        "command,defaults",
        [
            ("prepare", cli.PREPARE_DEFAULTS),
            ("train", cli.TRAIN_DEFAULTS),
            ("enhance", cli.ENHANCE_DEFAULTS),
            ("deconvolve", cli.DECONVOLVE_DEFAULTS),
            ("evaluate", cli.EVALUATE_DEFAULTS),
            ("report", cli.EVALUATE_DEFAULTS),
        ],
    )
    def test_every_flag_listed_with_default(self, capsys, command, defaults):
        with pytest.raises(SystemExit) as exc:
            cli.main([command, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key, value in defaults.items():
            flag = "--" + key.replace("_", "-")
            assert flag in text
            assert f"(default: {value})" in text

    def test_deconvolve_default_iterations_is_ten(self):
        assert cli.DECONVOLVE_DEFAULTS["iterations"] == 10


class TestPrepare:
    def test_two_pairs_augment_three_gives_eight_entries(self, tmp_path):
        lq_dir, hq_dir = write_raw_pairs(tmp_path)
        out = tmp_path / "prepared"
        assert cli.main(prepare_args(lq_dir, hq_dir, out)) == 0
        manifest = dataset.DatasetManifest.load(out / "manifest.json")
        assert len(manifest.entries) == 8
        for e in manifest.entries:
            img = dataset.load_image(out / e.lq_path)
            assert img.shape == (3, 64, 64)

    def test_rerun_same_seed_identical_manifest(self, tmp_path):
        lq_dir, hq_dir = write_raw_pairs(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(prepare_args(lq_dir, hq_dir, out_a, seed=5))
        cli.main(prepare_args(lq_dir, hq_dir, out_b, seed=5))
        a = (out_a / "manifest.json").read_text().replace(str(out_a), "")
        b = (out_b / "manifest.json").read_text().replace(str(out_b), "")
        assert a == b

    def test_unalignable_pair_excluded_and_reported(self, tmp_path):
        lq_dir, hq_dir = write_raw_pairs(tmp_path, unalignable=1)
        out = tmp_path / "prepared"
        code = cli.main(prepare_args(lq_dir, hq_dir, out, ncc_threshold=0.6))
        assert code == 1
        report = json.loads((out / "alignment_report.json").read_text())
        by_id = {r["id"]: r for r in report["pairs"]}
        assert by_id["bad0"]["status"] == "failed"
        manifest = dataset.DatasetManifest.load(out / "manifest.json")
        assert not any(e.id.startswith("bad0") for e in manifest.entries)

    def test_no_matchable_pairs_exit_two(self, tmp_path):
        (tmp_path / "empty_lq").mkdir()
        (tmp_path / "empty_hq").mkdir()
        code = cli.main(
            prepare_args(tmp_path / "empty_lq", tmp_path / "empty_hq", tmp_path / "out")
        )
        assert code == 2

    def test_config_file_and_flag_precedence(self, tmp_path):
        lq_dir, hq_dir = write_raw_pairs(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"augment_count": 1}))

        out_default = tmp_path / "out_default"
        cli.main(prepare_args(lq_dir, hq_dir, out_default))
        assert len(dataset.DatasetManifest.load(out_default / "manifest.json").entries) == 8

        out_file = tmp_path / "out_file"
        cli.main(prepare_args(lq_dir, hq_dir, out_file) + ["--config", str(cfg)])
        assert len(dataset.DatasetManifest.load(out_file / "manifest.json").entries) == 4

        out_flag = tmp_path / "out_flag"
        cli.main(
            prepare_args(lq_dir, hq_dir, out_flag, augment_count=2)
            + ["--config", str(cfg)]
        )
        assert len(dataset.DatasetManifest.load(out_flag / "manifest.json").entries) == 6


class TestTrain:
    def test_missing_manifest_exit_two(self, tmp_path, capsys):
        code = cli.main(["train", "--manifest", str(tmp_path / "nope.json")])
        assert code == 2
        assert "does not exist" in capsys.readouterr().err

    def test_zero_iterations_init_checkpoint_only(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path)
        manifest.save(tmp_path / "manifest.json")
        out = tmp_path / "run"
        code = cli.main(
            ["train", "--manifest", str(tmp_path / "manifest.json"),
             "--out-dir", str(out), "--iterations", "0"] + TRAIN_SMALL
        )
        assert code == 0
        assert (out / "final.ckpt").exists()
        log = (out / "training_log.csv").read_text().strip().splitlines()
        assert len(log) == 1

    def test_same_seed_byte_identical_logs(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path)
        manifest.save(tmp_path / "manifest.json")

        def run(out):
            code = cli.main(
                ["train", "--manifest", str(tmp_path / "manifest.json"),
                 "--out-dir", str(out), "--iterations", "6",
                 "--validation-every", "2", "--seed", "7"] + TRAIN_SMALL
            )
            assert code == 0
            return (out / "training_log.csv").read_bytes()

        assert run(tmp_path / "a") == run(tmp_path / "b")


class TestEnhance:
    def _checkpoint(self, tmp_path, base_channels=2, seed=0):
        g = Generator(base_channels=base_channels, seed=seed)
        path = tmp_path / "gen.ckpt"
        save_checkpoint(g, {"iteration": 1, "seed": seed}, path)
        return path

    def test_n_inputs_n_outputs_16bit(self, tmp_path):
        ckpt = self._checkpoint(tmp_path)
        img_dir = tmp_path / "inputs"
        img_dir.mkdir()
        for i in range(3):
            lq, _ = synthetic_pair(size=32, seed=i)
            dataset.save_image(img_dir / f"img{i}.tif", lq)
        out = tmp_path / "enhanced"
        code = cli.main(
            ["enhance", "--checkpoint", str(ckpt), "--images", str(img_dir),
             "--out-dir", str(out)]
        )
        assert code == 0
        names = sorted(os.listdir(out))
        assert names == [f"img{i}_generated.tif" for i in range(3)]
        import tifffile

        arr = tifffile.imread(out / names[0])
        assert arr.dtype == np.uint16
        assert arr.shape == (32, 32, 3)

    def test_indivisible_shape_suggests_center_crop(self, tmp_path, capsys):
        ckpt = self._checkpoint(tmp_path)
        img = np.random.default_rng(0).random((3, 40, 40)).astype(np.float32)
        dataset.save_image(tmp_path / "odd.tif", img)
        code = cli.main(
            ["enhance", "--checkpoint", str(ckpt), "--images",
             str(tmp_path / "odd.tif"), "--out-dir", str(tmp_path / "out")]
        )
        assert code == 1
        assert "center-crop" in capsys.readouterr().err

    def test_deterministic_outputs(self, tmp_path):
        ckpt = self._checkpoint(tmp_path, seed=4)
        lq, _ = synthetic_pair(size=32, seed=9)
        dataset.save_image(tmp_path / "in.tif", lq)
        outs = []
        for name in ("o1", "o2"):
            cli.main(
                ["enhance", "--checkpoint", str(ckpt), "--images",
                 str(tmp_path / "in.tif"), "--out-dir", str(tmp_path / name)]
            )
            outs.append((tmp_path / name / "in_generated.tif").read_bytes())
        assert outs[0] == outs[1]


class TestDeconvolve:
    def test_delta_psf_is_identity_within_quantization(self, tmp_path):
        lq, _ = synthetic_pair(size=32, seed=2)
        dataset.save_image(tmp_path / "in.tif", lq)
        out = tmp_path / "out"
        code = cli.main(
            ["deconvolve", "--images", str(tmp_path / "in.tif"),
             "--out-dir", str(out), "--delta-psf"]
        )
        assert code == 0
        back = dataset.load_image(out / "in_deconvolved.tif")
        original = dataset.load_image(tmp_path / "in.tif")
        assert np.max(np.abs(back - original)) <= 1.0 / 65535 + 1e-9

    def test_blurred_input_gains_psnr(self, tmp_path):
        from test_psf import smooth_test_pattern

        from microgan import metrics, psf as psf_mod

        truth = np.stack([smooth_test_pattern(64, seed=3)] * 3)
        kernel = psf_mod.born_wolf_psf(psf_mod.PsfParams(wavelength_nm=520.0, kernel_size=21))
        blurred = np.stack([np.clip(psf_mod.fft_convolve(c, kernel), 0, 1) for c in truth])
        dataset.save_image(tmp_path / "blurred.tif", blurred.astype(np.float32))
        out = tmp_path / "out"
        code = cli.main(
            ["deconvolve", "--images", str(tmp_path / "blurred.tif"),
             "--out-dir", str(out), "--kernel-size", "21",
             "--wavelengths", "520,520,520"]
        )
        assert code == 0
        restored = dataset.load_image(out / "blurred_deconvolved.tif")
        gain = metrics.psnr(truth, restored) - metrics.psnr(truth, blurred)
        assert gain >= 1.0

    def test_wavelength_count_mismatch_exit_two(self, tmp_path):
        lq, _ = synthetic_pair(size=32, seed=5)
        dataset.save_image(tmp_path / "in.tif", lq)
        code = cli.main(
            ["deconvolve", "--images", str(tmp_path / "in.tif"),
             "--out-dir", str(tmp_path / "out"), "--wavelengths", "520,461"]
        )
        assert code == 2


class TestEvaluateReport:
    def test_identical_pairs_with_constant_stub(self, tmp_path):
        level = np.float32(32768) / np.float32(65535)
        root = tmp_path
        (root / "images").mkdir()
        flat = np.full((3, 32, 32), level, dtype=np.float32)
        entries = []
        for i in range(2):
            lq, _ = synthetic_pair(size=32, seed=40 + i)
            dataset.save_image(root / f"images/p{i}_lq.tif", lq)
            dataset.save_image(root / f"images/p{i}_hq.tif", flat)
            entries.append(
                dataset.ManifestEntry(f"p{i}", f"images/p{i}_lq.tif", f"images/p{i}_hq.tif", "test")
            )
        manifest = dataset.DatasetManifest(seed=0, fractions=(0.8, 0.19, 0.01), entries=entries)
        manifest.save(root / "manifest.json")

        g = Generator(base_channels=2, seed=0)
        for p in g.params():
            p.value[...] = 0.0
        g.head.b.value[...] = level
        save_checkpoint(g, {"iteration": 1, "seed": 0}, root / "stub.ckpt")

        out = root / "eval"
        code = cli.main(
            ["evaluate", "--manifest", str(root / "manifest.json"),
             "--checkpoint", str(root / "stub.ckpt"), "--out-dir", str(out)]
        )
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        gen_rows = [l for l in lines if ":gen_vs_hq" in l]
        assert len(gen_rows) == 2
        for row in gen_rows:
            fields = row.split(",")
            assert fields[1] == "0.0"      # mse
            assert fields[2] == "0.0"      # nrmse
            assert fields[3] == "1.0"      # ssim
            assert fields[4] == "inf"      # psnr sentinel

    def test_report_directory_contents_and_exit_codes(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=3)
        manifest.save(tmp_path / "manifest.json")
        out = tmp_path / "report"
        code = cli.main(
            ["report", "--manifest", str(tmp_path / "manifest.json"),
             "--out-dir", str(out)]
        )
        assert code == 0
        assert sorted(os.listdir(out)) == [
            "boxplot_mse.svg", "boxplot_nrmse.svg", "boxplot_psnr.svg",
            "boxplot_ssim.svg", "metrics.csv", "summary.csv",
        ]

    def test_partial_failure_exit_one(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=2)
        manifest.entries[-1].hq_path = "images/gone.tif"
        manifest.save(tmp_path / "manifest.json")
        code = cli.main(
            ["evaluate", "--manifest", str(tmp_path / "manifest.json"),
             "--out-dir", str(tmp_path / "eval")]
        )
        assert code == 1
