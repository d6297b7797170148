"""Dataset-level evaluation and report rendering.

Every prepared pair yields one row per comparison class (LQ vs HQ,
generated vs HQ, deconvolved vs HQ); rows feed a metrics CSV, per-class
box-plot summaries and one SVG box plot per metric. All output bytes are
deterministic for fixed input.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import load_image
from .metrics import compare
from .stats import boxplot_stats

METRIC_NAMES = ("mse", "nrmse", "ssim", "psnr")
CSV_HEADER = "comparison,mse,nrmse,ssim,psnr"


@dataclass
class EvaluationResult:
    rows: list = field(default_factory=list)  # (pair_id, kind, MetricReport)
    failures: list = field(default_factory=list)  # (pair_id, message)

    def kinds(self):
        seen = []
        for _, kind, _ in self.rows:
            if kind not in seen:
                seen.append(kind)
        return seen

    def values(self, kind, metric):
        return [
            getattr(report, metric)
            for _, k, report in self.rows
            if k == kind
        ]

    def medians(self):
        out = {}
        for kind in self.kinds():
            out[kind] = {
                m: float(np.median([v for v in self.values(kind, m) if math.isfinite(v)]))
                for m in METRIC_NAMES
                if any(math.isfinite(v) for v in self.values(kind, m))
            }
        return out


def evaluate_dataset(manifest, split, base_dir=".", generator=None, deconvolve_fn=None):
    """Compare each pair of the split; optionally also score the model
    output and the classical baseline against the HQ reference.

    Per-pair errors are recorded in ``failures`` and the run continues.
    """
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"split {split!r} is empty")
    result = EvaluationResult()
    for e in entries:
        try:
            lq = load_image(os.path.join(base_dir, e.lq_path))
            hq = load_image(os.path.join(base_dir, e.hq_path))
            result.rows.append((e.id, "lq_vs_hq", compare(hq, lq, f"hq:{e.id}", f"lq:{e.id}")))
            if generator is not None:
                gen, _ = generator.forward(lq[None].astype(np.float32))
                gen = np.clip(gen[0], 0.0, 1.0)
                result.rows.append(
                    (e.id, "gen_vs_hq", compare(hq, gen, f"hq:{e.id}", f"gen:{e.id}"))
                )
            if deconvolve_fn is not None:
                dec = np.clip(deconvolve_fn(lq), 0.0, 1.0)
                result.rows.append(
                    (e.id, "deconv_vs_hq", compare(hq, dec, f"hq:{e.id}", f"deconv:{e.id}"))
                )
        except Exception as exc:  # per-row failure, run continues
            result.failures.append((e.id, str(exc)))
    return result


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(result, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for pair_id, kind, report in result.rows:
            fields = [f"{pair_id}:{kind}"] + [
                _fmt(getattr(report, m)) for m in METRIC_NAMES
            ]
            fh.write(",".join(fields) + "\n")
    return path


def build_distributions(result):
    """Per metric, one finite-valued box summary per comparison class."""
    out = {}
    for metric in METRIC_NAMES:
        dists = []
        for kind in result.kinds():
            finite = [v for v in result.values(kind, metric) if math.isfinite(v)]
            if finite:
                dists.append(boxplot_stats(finite, label=kind))
        if dists:
            out[metric] = dists
    return out


def write_summary_csv(distributions, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label,median,q1,q3,whisker_low,whisker_high,n_outliers\n")
        for metric in METRIC_NAMES:
            for d in distributions.get(metric, []):
                fields = [
                    f"{metric}:{d.label}",
                    _fmt(d.median),
                    _fmt(d.q1),
                    _fmt(d.q3),
                    _fmt(d.whisker_low),
                    _fmt(d.whisker_high),
                    str(len(d.outliers)),
                ]
                fh.write(",".join(fields) + "\n")
    return path


# ---------------------------------------------------------------------------
# SVG box plots, hand-rendered so output bytes are reproducible

_BOX_W = 60
_SLOT_W = 120
_PLOT_H = 260
_MARGIN_TOP = 30
_MARGIN_BOTTOM = 40
_MARGIN_LEFT = 70


def _num(v):
    return f"{v:.6g}"


def boxplot_svg(distributions, title):
    """Render box-and-whisker glyphs plus outlier points for one metric."""
    width = _MARGIN_LEFT + _SLOT_W * len(distributions) + 30
    height = _MARGIN_TOP + _PLOT_H + _MARGIN_BOTTOM
    lo = min(min(d.whisker_low, *(d.outliers or [d.whisker_low])) for d in distributions)
    hi = max(max(d.whisker_high, *(d.outliers or [d.whisker_high])) for d in distributions)
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def y(v):
        frac = (v - lo) / (hi - lo)
        return _MARGIN_TOP + _PLOT_H * (1.0 - frac)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.6g}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN_LEFT - 10}" y1="{_num(y(hi))}" x2="{_MARGIN_LEFT - 10}" '
        f'y2="{_num(y(lo))}" stroke="black"/>',
        f'<text x="{_MARGIN_LEFT - 14}" y="{_num(y(hi) + 4)}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{_num(hi)}</text>',
        f'<text x="{_MARGIN_LEFT - 14}" y="{_num(y(lo) + 4)}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{_num(lo)}</text>',
    ]
    for i, d in enumerate(distributions):
        cx = _MARGIN_LEFT + _SLOT_W * i + _SLOT_W / 2
        x0 = cx - _BOX_W / 2
        x1 = cx + _BOX_W / 2
        parts += [
            f'<line x1="{_num(cx)}" y1="{_num(y(d.whisker_high))}" x2="{_num(cx)}" '
            f'y2="{_num(y(d.q3))}" stroke="black"/>',
            f'<line x1="{_num(cx)}" y1="{_num(y(d.q1))}" x2="{_num(cx)}" '
            f'y2="{_num(y(d.whisker_low))}" stroke="black"/>',
            f'<line x1="{_num(cx - 15)}" y1="{_num(y(d.whisker_high))}" '
            f'x2="{_num(cx + 15)}" y2="{_num(y(d.whisker_high))}" stroke="black"/>',
            f'<line x1="{_num(cx - 15)}" y1="{_num(y(d.whisker_low))}" '
            f'x2="{_num(cx + 15)}" y2="{_num(y(d.whisker_low))}" stroke="black"/>',
            f'<rect x="{_num(x0)}" y="{_num(y(d.q3))}" width="{_BOX_W}" '
            f'height="{_num(max(y(d.q1) - y(d.q3), 0.5))}" fill="#9ecae1" stroke="black"/>',
            f'<line x1="{_num(x0)}" y1="{_num(y(d.median))}" x2="{_num(x1)}" '
            f'y2="{_num(y(d.median))}" stroke="black" stroke-width="2"/>',
        ]
        parts += [
            f'<circle cx="{_num(cx)}" cy="{_num(y(v))}" r="2.5" fill="none" stroke="black"/>'
            for v in d.outliers
        ]
        parts.append(
            f'<text x="{_num(cx)}" y="{height - 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{d.label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_report(result, out_dir):
    """Write metrics.csv, summary.csv and one box-plot SVG per metric."""
    os.makedirs(out_dir, exist_ok=True)
    written = [write_metrics_csv(result, os.path.join(out_dir, "metrics.csv"))]
    distributions = build_distributions(result)
    written.append(write_summary_csv(distributions, os.path.join(out_dir, "summary.csv")))
    for metric in METRIC_NAMES:
        dists = distributions.get(metric)
        if not dists:
            continue
        path = os.path.join(out_dir, f"boxplot_{metric}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(boxplot_svg(dists, metric.upper()))
        written.append(path)
    return written
