"""Command-line pipeline: prepare, train, enhance, deconvolve, evaluate, report.

Every flag has a default shown in --help; values in a JSON config file
override the defaults and explicit flags override the file. Exit codes:
0 success, 1 partial per-item failures, 2 usage errors.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import dataset, evaluate, psf
from .models import Generator, LossWeights
from .train import CheckpointError, TrainConfig, load_checkpoint, train_loop
from .validation import ShapeError

IMAGE_EXTS = (".tif", ".tiff", ".png")


class UsageError(Exception):
    """Bad invocation: missing inputs, unreadable files, empty matches."""


PREPARE_DEFAULTS = {
    "out_dir": "prepared",
    "seed": 0,
    "augment_count": 3,
    "fractions": "0.8,0.19,0.01",
    "target_size": 256,
    "search_range_deg": 5.0,
    "step_deg": 0.5,
    "ncc_threshold": 0.2,
}

TRAIN_DEFAULTS = {
    "out_dir": "train_run",
    "iterations": 10000,
    "checkpoint_every": 10000,
    "batch_size": 1,
    "seed": 0,
    "learning_rate": 1e-5,
    "alpha": 10.0,
    "beta": 0.05,
    "gamma": 1.0,
    "validation_every": 100,
    "base_channels": 16,
    "fc_hidden": 64,
    "channel_cap": 256,
}

ENHANCE_DEFAULTS = {"out_dir": "enhanced"}

DECONVOLVE_DEFAULTS = {
    "out_dir": "deconvolved",
    "iterations": 10,
    "numerical_aperture": 1.4,
    "refractive_index": 1.515,
    "pixel_size_nm": 159.0,
    "wavelengths": "565,520,461",
    "kernel_size": 65,
    "delta_psf": False,
}

EVALUATE_DEFAULTS = {
    "out_dir": "evaluation",
    "split": "test",
    "deconvolve": False,
    "iterations": 10,
    "numerical_aperture": 1.4,
    "refractive_index": 1.515,
    "pixel_size_nm": 159.0,
    "wavelengths": "565,520,461",
    "kernel_size": 65,
}


def _add_options(sub, defaults, flag_types):
    sub.add_argument("--config", default=None,
                     help="JSON config file; flags override file values (default: none)")
    for key, default in defaults.items():
        flag = "--" + key.replace("_", "-")
        kind = flag_types.get(key, type(default))
        if kind is bool:
            sub.add_argument(flag, action=argparse.BooleanOptionalAction, default=None,
                             help=f"(default: {default})")
        else:
            sub.add_argument(flag, type=kind, default=None,
                             help=f"(default: {default})")


def _resolve(args, defaults):
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
    out = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            out[key] = flag_val
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = default
    return out


def _parse_fractions(text):
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise UsageError(f"fractions must be three comma-separated numbers, got {text!r}")
    return tuple(parts)


def _parse_wavelengths(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(p) for p in str(text).split(",")]


def _collect_images(paths):
    files = []
    for p in paths:
        if os.path.isdir(p):
            files += [
                os.path.join(p, name)
                for name in sorted(os.listdir(p))
                if os.path.splitext(name)[1].lower() in IMAGE_EXTS
            ]
        elif os.path.exists(p):
            files.append(p)
        else:
            raise UsageError(f"input image {p} does not exist")
    if not files:
        raise UsageError("no input images found")
    return files


def _load_manifest(path):
    if not os.path.exists(path):
        raise UsageError(f"manifest {path} does not exist")
    return dataset.DatasetManifest.load(path), os.path.dirname(os.path.abspath(path))


# ---------------------------------------------------------------------------
# subcommands

def cmd_prepare(args):
    cfg = _resolve(args, PREPARE_DEFAULTS)
    if not os.path.isdir(args.lq_dir) or not os.path.isdir(args.hq_dir):
        raise UsageError("both --lq-dir and --hq-dir must be existing directories")
    pairs = dataset.match_pairs(args.lq_dir, args.hq_dir)
    if not pairs:
        raise UsageError(
            f"no matchable pairs between {args.lq_dir} and {args.hq_dir}"
        )
    out_dir = cfg["out_dir"]
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    fractions = _parse_fractions(cfg["fractions"])

    aligned = []
    report = []
    for pair_id, lq_path, hq_path in pairs:
        try:
            sample = dataset.align_pair(
                dataset.load_image(lq_path),
                dataset.load_image(hq_path),
                pair_id=pair_id,
                target_size=int(cfg["target_size"]),
                search_range_deg=float(cfg["search_range_deg"]),
                step_deg=float(cfg["step_deg"]),
                ncc_threshold=float(cfg["ncc_threshold"]),
            )
            aligned.append(sample)
            report.append({"id": pair_id, "status": "ok", "transforms": sample.transform_log})
        except (dataset.UnalignablePairError, dataset.ImageIOError, ShapeError) as exc:
            report.append({"id": pair_id, "status": "failed", "error": str(exc)})
    with open(os.path.join(out_dir, "alignment_report.json"), "w", encoding="utf-8") as fh:
        json.dump({"pairs": report}, fh, indent=2)
        fh.write("\n")
    if not aligned:
        print("prepare: no pair could be aligned; see alignment_report.json", file=sys.stderr)
        return 1

    # split the originals, then augment within each split so augmented
    # copies of one field can never leak across splits; with fewer than
    # three originals everything goes to train
    seed = int(cfg["seed"])
    ids = [(s.id, "", "") for s in aligned]
    if len(aligned) >= 3:
        split_of = {
            e.id: e.split for e in dataset.split_dataset(ids, fractions, seed).entries
        }
    else:
        split_of = {s.id: "train" for s in aligned}

    entries = []
    for i, sample in enumerate(aligned):
        split = split_of[sample.id]
        family = [sample] + dataset.augment_pair(
            sample, seed=[seed, i], count=int(cfg["augment_count"])
        )
        for member in family:
            lq_rel = f"images/{member.id}_lq.tif"
            hq_rel = f"images/{member.id}_hq.tif"
            dataset.save_image(os.path.join(out_dir, lq_rel), member.lq)
            dataset.save_image(os.path.join(out_dir, hq_rel), member.hq)
            entries.append(dataset.ManifestEntry(member.id, lq_rel, hq_rel, split))
    manifest = dataset.DatasetManifest(seed=seed, fractions=fractions, entries=entries)
    manifest.save(os.path.join(out_dir, "manifest.json"))
    counts = manifest.counts()
    print(
        f"prepared {len(entries)} pairs "
        f"(train {counts['train']}, test {counts['test']}, "
        f"validation {counts['validation']}) in {out_dir}"
    )
    failed = [r for r in report if r["status"] == "failed"]
    if failed:
        print(f"{len(failed)} pair(s) could not be aligned; see alignment_report.json")
        return 1
    return 0


def cmd_train(args):
    cfg = _resolve(args, TRAIN_DEFAULTS)
    manifest, base_dir = _load_manifest(args.manifest)
    config = TrainConfig(
        iterations=int(cfg["iterations"]),
        checkpoint_every=int(cfg["checkpoint_every"]),
        batch_size=int(cfg["batch_size"]),
        seed=int(cfg["seed"]),
        learning_rate=float(cfg["learning_rate"]),
        weights=LossWeights(
            alpha=float(cfg["alpha"]), beta=float(cfg["beta"]), gamma=float(cfg["gamma"])
        ),
        validation_every=int(cfg["validation_every"]),
        base_channels=int(cfg["base_channels"]),
        fc_hidden=int(cfg["fc_hidden"]),
        channel_cap=int(cfg["channel_cap"]),
    )

    printed_header = False

    def progress(row):
        nonlocal printed_header
        if not printed_header:
            print(",".join(str(k) for k in row))
            printed_header = True
        print(",".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()))

    final_path, best_path = train_loop(
        manifest, config, cfg["out_dir"], base_dir=base_dir, progress=progress
    )
    print(f"final checkpoint: {final_path}")
    print(f"best checkpoint:  {best_path}")
    return 0


def _load_generator(path):
    if not os.path.exists(path):
        raise UsageError(f"checkpoint {path} does not exist")
    model, header = load_checkpoint(path)
    if not isinstance(model, Generator):
        raise UsageError(f"checkpoint {path} does not hold a generator model")
    return model, header


def cmd_enhance(args):
    cfg = _resolve(args, ENHANCE_DEFAULTS)
    model, _ = _load_generator(args.checkpoint)
    files = _collect_images(args.images)
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    failures = []
    for path in files:
        try:
            img = dataset.load_image(path)
            if img.shape[0] != model.in_channels:
                raise ShapeError(
                    f"{path}: expected {model.in_channels}-channel image, "
                    f"got {img.shape[0]} channels"
                )
            if img.shape[1] % 16 or img.shape[2] % 16:
                raise ShapeError(
                    f"{path}: spatial dims {img.shape[1:]} are not divisible by 16; "
                    f"center-crop the image first"
                )
            out, _ = model.forward(img[None].astype(np.float32))
            stem = os.path.splitext(os.path.basename(path))[0]
            out_path = os.path.join(out_dir, f"{stem}_generated.tif")
            dataset.save_image(out_path, np.clip(out[0], 0.0, 1.0), bit_depth=16)
            print(f"{path} -> {out_path}")
        except (dataset.ImageIOError, ShapeError) as exc:
            failures.append((path, str(exc)))
            print(f"failed: {exc}", file=sys.stderr)
    return 1 if failures else 0


def _build_psfs(cfg, channels):
    wavelengths = _parse_wavelengths(cfg["wavelengths"])
    if cfg.get("delta_psf"):
        return [psf.delta_psf()] * channels
    if len(wavelengths) not in (1, channels):
        raise UsageError(
            f"{len(wavelengths)} wavelengths given for {channels}-channel images; "
            f"give one per channel or a single shared value"
        )
    params = [
        psf.PsfParams(
            numerical_aperture=float(cfg["numerical_aperture"]),
            refractive_index=float(cfg["refractive_index"]),
            wavelength_nm=float(w),
            pixel_size_nm=float(cfg["pixel_size_nm"]),
            kernel_size=int(cfg["kernel_size"]),
        )
        for w in wavelengths
    ]
    kernels = [psf.born_wolf_psf(p) for p in params]
    if len(kernels) == 1:
        kernels = kernels * channels
    return kernels


def _deconvolve_image(img, kernels, iterations):
    out = np.empty(img.shape, dtype=np.float64)
    for ch in range(img.shape[0]):
        out[ch] = psf.richardson_lucy(
            np.clip(img[ch], 0.0, None), kernels[ch], iterations=iterations
        )
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def cmd_deconvolve(args):
    cfg = _resolve(args, DECONVOLVE_DEFAULTS)
    files = _collect_images(args.images)
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    failures = []
    kernels = None
    for path in files:
        try:
            img = dataset.load_image(path)
            if kernels is None or len(kernels) != img.shape[0]:
                kernels = _build_psfs(cfg, img.shape[0])
            out = _deconvolve_image(img, kernels, int(cfg["iterations"]))
            stem = os.path.splitext(os.path.basename(path))[0]
            out_path = os.path.join(out_dir, f"{stem}_deconvolved.tif")
            dataset.save_image(out_path, out, bit_depth=16)
            print(f"{path} -> {out_path}")
        except (dataset.ImageIOError, ShapeError, psf.QuadratureError) as exc:
            failures.append((path, str(exc)))
            print(f"failed: {exc}", file=sys.stderr)
    return 1 if failures else 0


def _run_evaluation(args, with_report):
    cfg = _resolve(args, EVALUATE_DEFAULTS)
    manifest, base_dir = _load_manifest(args.manifest)
    generator = None
    if getattr(args, "checkpoint", None):
        generator, _ = _load_generator(args.checkpoint)
    deconvolve_fn = None
    if cfg["deconvolve"]:
        kernels_cache = {}

        def deconvolve_fn(img):
            c = img.shape[0]
            if c not in kernels_cache:
                kernels_cache[c] = _build_psfs(cfg, c)
            return _deconvolve_image(img, kernels_cache[c], int(cfg["iterations"]))

    result = evaluate.evaluate_dataset(
        manifest, cfg["split"], base_dir=base_dir,
        generator=generator, deconvolve_fn=deconvolve_fn,
    )
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    if with_report:
        evaluate.render_report(result, out_dir)
    else:
        evaluate.write_metrics_csv(result, os.path.join(out_dir, "metrics.csv"))
    for kind, medians in result.medians().items():
        summary = " ".join(f"{m}={v:.6g}" for m, v in medians.items())
        print(f"{kind}: median {summary}")
    for pair_id, message in result.failures:
        print(f"failed {pair_id}: {message}", file=sys.stderr)
    return 1 if result.failures else 0


def cmd_evaluate(args):
    return _run_evaluation(args, with_report=False)


def cmd_report(args):
    return _run_evaluation(args, with_report=True)


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="microgan",
        description="Cross-system microscopy image enhancement pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="align, augment and split raw pairs")
    p.add_argument("--lq-dir", required=True, help="directory of low-quality fields")
    p.add_argument("--hq-dir", required=True, help="directory of high-quality fields")
    _add_options(p, PREPARE_DEFAULTS, {"fractions": str})
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run the adversarial training loop")
    p.add_argument("--manifest", required=True, help="prepared dataset manifest")
    _add_options(p, TRAIN_DEFAULTS, {})
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="apply a trained model to images")
    p.add_argument("--checkpoint", required=True, help="generator checkpoint file")
    p.add_argument("--images", required=True, nargs="+", help="image files or directories")
    _add_options(p, ENHANCE_DEFAULTS, {})
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("deconvolve", help="classical per-channel deconvolution")
    p.add_argument("--images", required=True, nargs="+", help="image files or directories")
    _add_options(p, DECONVOLVE_DEFAULTS, {"wavelengths": str, "delta_psf": bool})
    p.set_defaults(func=cmd_deconvolve)

    p = sub.add_parser("evaluate", help="per-pair metric rows for one split")
    p.add_argument("--manifest", required=True, help="prepared dataset manifest")
    p.add_argument("--checkpoint", default=None, help="optional generator checkpoint")
    _add_options(p, EVALUATE_DEFAULTS, {"deconvolve": bool, "wavelengths": str})
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="metric rows plus summaries and box plots")
    p.add_argument("--manifest", required=True, help="prepared dataset manifest")
    p.add_argument("--checkpoint", default=None, help="optional generator checkpoint")
    _add_options(p, EVALUATE_DEFAULTS, {"deconvolve": bool, "wavelengths": str})
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (dataset.ImageIOError, CheckpointError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
