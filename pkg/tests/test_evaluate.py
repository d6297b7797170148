"""Dataset evaluation rows, CSV schemas and deterministic SVG rendering."""

import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from conftest import make_manifest_dataset, synthetic_pair

from microgan import dataset, evaluate, metrics
from microgan.models import Generator
from microgan.stats import boxplot_stats

GOLDEN_SVG = os.path.join(os.path.dirname(__file__), "data", "golden_boxplot.svg")


def constant_output_generator(level=0.5):
    """A stub whose output is identically ``level`` for any input."""
    g = Generator(base_channels=2, seed=0)
    for p in g.params():
        p.value[...] = 0.0
    g.head.b.value[...] = level
    return g


class TestEvaluateDataset:
    def test_identical_pairs_give_perfect_rows(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, identical=True)
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        assert len(result.rows) == 1
        _, kind, report = result.rows[0]
        assert kind == "lq_vs_hq"
        assert (report.mse, report.nrmse, report.ssim, report.psnr) == (0.0, 0.0, 1.0, math.inf)

    def test_row_count_matches_requested_comparisons(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=3)
        gen = constant_output_generator()
        result = evaluate.evaluate_dataset(
            manifest, "test", base_dir=tmp_path,
            generator=gen, deconvolve_fn=lambda img: img,
        )
        assert len(result.rows) == 3 * 3
        assert result.kinds() == ["lq_vs_hq", "gen_vs_hq", "deconv_vs_hq"]

    def test_constant_stub_against_matching_reference(self, tmp_path):
        # generator emits a constant that survives 16-bit quantization
        # exactly; hq images hold the same constant so the generated rows
        # are perfect
        level = np.float32(32768) / np.float32(65535)
        root = tmp_path
        (root / "images").mkdir()
        flat = np.full((3, 32, 32), level, dtype=np.float32)
        lq, _ = synthetic_pair(seed=1)
        dataset.save_image(root / "images/p0_lq.tif", lq)
        dataset.save_image(root / "images/p0_hq.tif", flat)
        manifest = dataset.DatasetManifest(
            seed=0, fractions=(0.8, 0.19, 0.01),
            entries=[dataset.ManifestEntry("p0", "images/p0_lq.tif", "images/p0_hq.tif", "test")],
        )
        result = evaluate.evaluate_dataset(
            manifest, "test", base_dir=root, generator=constant_output_generator(level)
        )
        gen_rows = [r for _, k, r in result.rows if k == "gen_vs_hq"]
        assert len(gen_rows) == 1
        assert gen_rows[0].mse == 0.0
        assert gen_rows[0].psnr == math.inf

    def test_missing_file_recorded_and_run_continues(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=2)
        manifest.entries[-1].lq_path = "images/does_not_exist.tif"
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        assert len(result.rows) == 1
        assert len(result.failures) == 1
        assert result.failures[0][0] == "p4"

    def test_rows_match_direct_metric_calls(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path)
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        entry = manifest.split("test")[0]
        lq = dataset.load_image(tmp_path / entry.lq_path)
        hq = dataset.load_image(tmp_path / entry.hq_path)
        report = result.rows[0][2]
        assert report.mse == metrics.mse(hq, lq)
        assert report.ssim == metrics.ssim(hq, lq)
        assert report.nrmse == metrics.nrmse(hq, lq)
        assert report.psnr == metrics.psnr(hq, lq)

    def test_empty_split_rejected(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=0)
        with pytest.raises(ValueError, match="empty"):
            evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)

    def test_medians(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=3)
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        med = result.medians()["lq_vs_hq"]
        values = sorted(r.mse for _, _, r in result.rows)
        assert med["mse"] == values[1]


class TestCsvOutputs:
    def test_metrics_csv_schema(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, identical=True)
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        path = tmp_path / "metrics.csv"
        evaluate.write_metrics_csv(result, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "comparison,mse,nrmse,ssim,psnr"
        fields = lines[1].split(",")
        assert fields[0] == "p3:lq_vs_hq"
        assert fields[-1] == "inf"  # psnr sentinel for identical images

    def test_summary_csv_header_only_when_no_rows(self, tmp_path):
        path = tmp_path / "summary.csv"
        evaluate.write_summary_csv({}, path)
        assert path.read_text() == "label,median,q1,q3,whisker_low,whisker_high,n_outliers\n"

    def test_infinite_values_excluded_from_distributions(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, identical=True)
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        dists = evaluate.build_distributions(result)
        assert "psnr" not in dists  # the only psnr value was infinite
        assert "mse" in dists


class TestSvg:
    def _distributions(self):
        rng = np.random.default_rng(0)
        return [
            boxplot_stats(np.concatenate([rng.random(30), [2.5, 3.0]]), label="lq_vs_hq"),
            boxplot_stats(rng.random(30) * 0.4 + 0.5, label="gen_vs_hq"),
        ]

    def test_svg_is_well_formed_xml(self):
        svg = evaluate.boxplot_svg(self._distributions(), "SSIM")
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")

    def test_svg_deterministic(self):
        a = evaluate.boxplot_svg(self._distributions(), "SSIM")
        b = evaluate.boxplot_svg(self._distributions(), "SSIM")
        assert a == b

    def test_svg_matches_golden_file(self):
        svg = evaluate.boxplot_svg(self._distributions(), "SSIM")
        with open(GOLDEN_SVG, encoding="utf-8") as fh:
            assert svg == fh.read()

    def test_outlier_markers_present(self):
        svg = evaluate.boxplot_svg(self._distributions(), "MSE")
        assert svg.count("<circle") == 2


class TestRenderReport:
    def test_report_directory_contents(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=3)
        result = evaluate.evaluate_dataset(
            manifest, "test", base_dir=tmp_path, generator=constant_output_generator()
        )
        out = tmp_path / "report"
        evaluate.render_report(result, out)
        assert sorted(os.listdir(out)) == [
            "boxplot_mse.svg",
            "boxplot_nrmse.svg",
            "boxplot_psnr.svg",
            "boxplot_ssim.svg",
            "metrics.csv",
            "summary.csv",
        ]

    def test_report_deterministic_bytes(self, tmp_path):
        manifest = make_manifest_dataset(tmp_path, n_test=2)
        result = evaluate.evaluate_dataset(manifest, "test", base_dir=tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        evaluate.render_report(result, out_a)
        evaluate.render_report(result, out_b)
        for name in os.listdir(out_a):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
