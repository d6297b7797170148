"""Paired image database preparation.

Raw fields are loaded and normalized to [0, 1], rigidly aligned (rotation
search, crop to the high-quality frame, translation), optionally matched
along the focal axis, augmented with paired transforms, and split into
train/test/validation subsets described by a JSON manifest.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .validation import ShapeError, check_image

SPLIT_NAMES = ("train", "test", "validation")
DEFAULT_FRACTIONS = (0.80, 0.19, 0.01)
MAX_AUG_TRANSLATION = 16


class ImageIOError(IOError):
    """A file could not be read or written as a supported image."""


class UnalignablePairError(RuntimeError):
    """Alignment correlation fell below the acceptance threshold."""


class DegenerateImageError(ValueError):
    """A constant image carries no registration signal."""


# ---------------------------------------------------------------------------
# image I/O

def _to_chw(arr):
    if arr.ndim == 2:
        return arr[None]
    if arr.ndim == 3 and arr.shape[2] in (1, 3):
        return np.ascontiguousarray(arr.transpose(2, 0, 1))
    raise ImageIOError(f"unsupported image layout with shape {arr.shape}")


def load_image(path):
    """Load an 8- or 16-bit grayscale/RGB TIFF or PNG as float32 in [0, 1].

    Values are divided by the dtype maximum (255 or 65535); channel order
    is preserved. Returns a (channels, h, w) array.
    """
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext in (".tif", ".tiff"):
            import tifffile

            arr = tifffile.imread(path)
        elif ext == ".png":
            with Image.open(path) as im:
                arr = np.asarray(im)
        else:
            raise ImageIOError(f"unsupported file extension {ext!r} for {path}")
    except ImageIOError:
        raise
    except Exception as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc
    if arr.dtype == np.uint8:
        maxval = 255.0
    elif arr.dtype == np.uint16:
        maxval = 65535.0
    elif arr.dtype == np.int32:  # 16-bit grayscale PNG decoded as mode "I"
        if arr.min() < 0 or arr.max() > 65535:
            raise ImageIOError(f"unsupported bit depth in {path}: int32 outside 16-bit range")
        arr = arr.astype(np.uint16)
        maxval = 65535.0
    else:
        raise ImageIOError(f"unsupported bit depth {arr.dtype} in {path}")
    chw = _to_chw(arr)
    return (chw.astype(np.float32) / np.float32(maxval)).astype(np.float32)


def save_image(path, img, bit_depth=16):
    """Quantize a [0, 1] float image to 8 or 16 bits and write TIFF or PNG."""
    path = os.fspath(path)
    img = check_image(img, "image")
    chw = img[None] if img.ndim == 2 else img
    if bit_depth == 16:
        dtype, maxval = np.uint16, 65535
    elif bit_depth == 8:
        dtype, maxval = np.uint8, 255
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    q = np.round(np.clip(chw, 0.0, 1.0) * maxval).astype(dtype)
    ext = os.path.splitext(path)[1].lower()
    if ext in (".tif", ".tiff"):
        import tifffile

        if q.shape[0] == 1:
            tifffile.imwrite(path, q[0])
        else:
            tifffile.imwrite(path, q.transpose(1, 2, 0), photometric="rgb")
    elif ext == ".png":
        if q.shape[0] == 1:
            Image.fromarray(q[0]).save(path)
        elif q.shape[0] == 3 and bit_depth == 8:
            Image.fromarray(q.transpose(1, 2, 0)).save(path)
        else:
            raise ImageIOError(
                f"cannot write {q.shape[0]}-channel {bit_depth}-bit PNG; use TIFF"
            )
    else:
        raise ImageIOError(f"unsupported file extension {ext!r} for {path}")


# ---------------------------------------------------------------------------
# paired samples and transforms

@dataclass
class PairedSample:
    """An aligned LQ/HQ image pair plus provenance metadata."""

    lq: np.ndarray
    hq: np.ndarray
    id: str
    transform_log: list = field(default_factory=list)

    def __post_init__(self):
        if self.lq.shape != self.hq.shape:
            raise ShapeError(
                f"paired images disagree: lq {self.lq.shape} vs hq {self.hq.shape}"
            )


def translate_zero_fill(img, dy, dx):
    """Shift a (c, h, w) image, filling exposed borders with 0."""
    out = np.zeros_like(img)
    h, w = img.shape[-2:]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    out[..., dst_y, dst_x] = img[..., src_y, src_x]
    return out


def center_crop(img, size_y, size_x=None):
    size_x = size_y if size_x is None else size_x
    h, w = img.shape[-2:]
    if h < size_y or w < size_x:
        raise ShapeError(f"cannot crop {img.shape} to ({size_y}, {size_x})")
    oy, ox = (h - size_y) // 2, (w - size_x) // 2
    return img[..., oy : oy + size_y, ox : ox + size_x]


def apply_transform(img, entry):
    """Apply one logged transform entry to a (c, h, w) image."""
    kind = entry["kind"]
    if kind == "rot90":
        return np.ascontiguousarray(np.rot90(img, entry["k"], axes=(-2, -1)))
    if kind == "flip_h":
        return np.ascontiguousarray(img[..., :, ::-1])
    if kind == "flip_v":
        return np.ascontiguousarray(img[..., ::-1, :])
    if kind == "translate":
        return translate_zero_fill(img, entry["dy"], entry["dx"])
    if kind == "rotate_deg":
        if entry["angle"] == 0.0:
            return img.copy()
        return _rotate_channels(img, entry["angle"])
    if kind == "crop":
        y, x = entry["y"], entry["x"]
        return np.ascontiguousarray(img[..., y : y + entry["h"], x : x + entry["w"]])
    if kind == "center_crop":
        return np.ascontiguousarray(center_crop(img, entry["size"]))
    raise ValueError(f"unknown transform kind {kind!r}")


def _rotate_channels(img, angle_deg):
    out = np.stack(
        [
            ndimage.rotate(c, angle_deg, reshape=False, order=1, mode="constant", cval=0.0)
            for c in img
        ]
    )
    return out.astype(img.dtype)


# ---------------------------------------------------------------------------
# registration

def _gray(img):
    img = check_image(img)
    return img if img.ndim == 2 else img.mean(axis=0)


def _check_not_constant(img, name):
    if float(np.std(img)) == 0.0:
        raise DegenerateImageError(f"{name} is constant; registration undefined")


def _ncc(a, b):
    """Zero-lag normalized cross-correlation (Pearson over pixels)."""
    a = a.astype(np.float64).ravel()
    b = b.astype(np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return -1.0
    return float(np.dot(a, b) / denom)


def estimate_shift(a, b):
    """Integer (dy, dx) maximizing circular cross-correlation of a and b.

    The returned shift satisfies b ~= roll(a, (dy, dx)): it is the
    displacement of b relative to a, computed in the frequency domain on
    mean-subtracted images.
    """
    a = _gray(a)
    b = _gray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    _check_not_constant(a, "first image")
    _check_not_constant(b, "second image")
    am = a.astype(np.float64) - a.mean()
    bm = b.astype(np.float64) - b.mean()
    cc = np.fft.ifft2(np.fft.fft2(bm) * np.conj(np.fft.fft2(am))).real
    idx = np.unravel_index(np.argmax(cc), cc.shape)
    return tuple(int(i - s) if i > s // 2 else int(i) for i, s in zip(idx, cc.shape))


def estimate_rotation(a, b, search_range_deg=5.0, step_deg=0.5):
    """Grid-search the rotation of b relative to a.

    Returns the angle theta (degrees) in the search grid maximizing the
    shift-compensated normalized cross-correlation, i.e. b ~= rotate(a,
    theta). Ties break toward smaller |theta|.
    """
    if not 0 < search_range_deg <= 10.0:
        raise ValueError(f"search range must be in (0, 10] degrees, got {search_range_deg}")
    if step_deg < 0.1:
        raise ValueError(f"step must be >= 0.1 degrees, got {step_deg}")
    a = _gray(a)
    b = _gray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    _check_not_constant(a, "first image")
    _check_not_constant(b, "second image")
    angles = np.arange(-search_range_deg, search_range_deg + step_deg / 2, step_deg)
    margin = max(2, int(0.15 * min(a.shape)))
    core = (slice(margin, a.shape[0] - margin), slice(margin, a.shape[1] - margin))
    best_angle, best_score = 0.0, -np.inf
    for angle in sorted(angles, key=lambda t: (abs(t), t)):
        if angle == 0.0:
            cand = b
        else:
            cand = ndimage.rotate(b, -angle, reshape=False, order=1, mode="constant", cval=0.0)
        try:
            s = estimate_shift(a, cand)
        except DegenerateImageError:
            continue
        aligned = np.roll(cand, (-s[0], -s[1]), axis=(0, 1))
        score = _ncc(a[core], aligned[core])
        if score > best_score:
            best_angle, best_score = float(angle), score
    return best_angle


def align_pair(
    lq_raw,
    hq_raw,
    pair_id="pair",
    target_size=256,
    search_range_deg=5.0,
    step_deg=0.5,
    ncc_threshold=0.2,
):
    """Rigidly align an LQ field onto its HQ frame and crop to a square patch.

    Steps: estimate and undo the relative rotation, crop the LQ field to
    the HQ frame, estimate and apply the residual translation, verify the
    correlation, then center-crop both to target_size. Every applied
    transform is recorded in the sample's transform_log.
    """
    lq = check_image(lq_raw, "lq")
    hq = check_image(hq_raw, "hq")
    lq = lq[None] if lq.ndim == 2 else lq
    hq = hq[None] if hq.ndim == 2 else hq
    if lq.shape[0] != hq.shape[0]:
        raise ShapeError(f"channel mismatch: lq {lq.shape} vs hq {hq.shape}")
    if lq.shape[1] < hq.shape[1] or lq.shape[2] < hq.shape[2]:
        raise ShapeError(
            f"LQ field {lq.shape} must be at least as large as HQ field {hq.shape}"
        )
    log = []
    ghq = _gray(hq)
    hq_h, hq_w = hq.shape[1], hq.shape[2]

    # rotation, estimated on the center crop of the LQ field
    lq_probe = center_crop(_gray(lq), hq_h, hq_w)
    theta = estimate_rotation(
        ghq, lq_probe, search_range_deg=search_range_deg, step_deg=step_deg
    )
    if theta != 0.0:
        lq = _rotate_channels(lq, -theta)
    log.append({"kind": "rotate_deg", "angle": -theta})

    # crop the LQ field to the HQ frame
    oy, ox = (lq.shape[1] - hq_h) // 2, (lq.shape[2] - hq_w) // 2
    log.append({"kind": "crop", "y": oy, "x": ox, "h": hq_h, "w": hq_w})

    # residual translation; prefer re-cropping at the displaced origin so
    # no content is lost, fall back to zero-filled shifting at the border
    shift = estimate_shift(ghq, _gray(lq[:, oy : oy + hq_h, ox : ox + hq_w]))
    ny, nx = oy + shift[0], ox + shift[1]
    if 0 <= ny <= lq.shape[1] - hq_h and 0 <= nx <= lq.shape[2] - hq_w:
        lq_aligned = lq[:, ny : ny + hq_h, nx : nx + hq_w]
    else:
        lq_aligned = translate_zero_fill(
            lq[:, oy : oy + hq_h, ox : ox + hq_w], -shift[0], -shift[1]
        )
    log.append({"kind": "translate", "dy": -shift[0], "dx": -shift[1]})

    score = _ncc(_gray(lq_aligned), ghq)
    if score < ncc_threshold:
        raise UnalignablePairError(
            f"unalignable pair {pair_id!r}: correlation {score:.3f} below "
            f"threshold {ncc_threshold}"
        )

    if hq_h < target_size or hq_w < target_size:
        raise ShapeError(
            f"HQ frame ({hq_h}, {hq_w}) is smaller than target size {target_size}"
        )
    lq_final = center_crop(lq_aligned, target_size)
    hq_final = center_crop(hq, target_size)
    log.append({"kind": "center_crop", "size": target_size})

    return PairedSample(
        lq=np.clip(lq_final, 0.0, 1.0).astype(np.float32),
        hq=np.clip(hq_final, 0.0, 1.0).astype(np.float32),
        id=pair_id,
        transform_log=log,
    )


def select_best_z(stack_a, stack_b):
    """Index pair maximizing normalized cross-correlation across stacks."""
    if len(stack_a) == 0 or len(stack_b) == 0:
        raise ValueError("stacks must be non-empty")
    best, best_score = (0, 0), -np.inf
    for ia, a in enumerate(stack_a):
        ga = _gray(np.asarray(a))
        for ib, b in enumerate(stack_b):
            score = _ncc(ga, _gray(np.asarray(b)))
            if score > best_score:
                best, best_score = (ia, ib), score
    return best


# ---------------------------------------------------------------------------
# augmentation and splitting

def augment_pair(sample, seed, count=3):
    """Emit `count` new pairs, each with one random paired transform chain.

    The same flips, 90-degree rotations and bounded zero-filled
    translations are applied to the LQ and HQ images; the chain is
    recorded so the emitted images can be reproduced bit-exactly.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(1, count + 1):
        k = int(rng.integers(0, 4))
        flip_h = bool(rng.integers(0, 2))
        flip_v = bool(rng.integers(0, 2))
        dy = int(rng.integers(-MAX_AUG_TRANSLATION, MAX_AUG_TRANSLATION + 1))
        dx = int(rng.integers(-MAX_AUG_TRANSLATION, MAX_AUG_TRANSLATION + 1))
        chain = []
        if k:
            chain.append({"kind": "rot90", "k": k})
        if flip_h:
            chain.append({"kind": "flip_h"})
        if flip_v:
            chain.append({"kind": "flip_v"})
        if dy or dx:
            chain.append({"kind": "translate", "dy": dy, "dx": dx})
        lq, hq = sample.lq, sample.hq
        for entry in chain:
            lq = apply_transform(lq, entry)
            hq = apply_transform(hq, entry)
        out.append(
            PairedSample(
                lq=lq,
                hq=hq,
                id=f"{sample.id}-aug{i}",
                transform_log=list(sample.transform_log) + chain,
            )
        )
    return out


@dataclass
class ManifestEntry:
    id: str
    lq_path: str
    hq_path: str
    split: str


@dataclass
class DatasetManifest:
    """File-backed description of a prepared dataset and its splits."""

    seed: int
    fractions: tuple
    entries: list
    version: int = 1

    def counts(self):
        c = {name: 0 for name in SPLIT_NAMES}
        for e in self.entries:
            c[e.split] += 1
        return c

    def split(self, name):
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return [e for e in self.entries if e.split == name]

    def validate(self):
        seen = {}
        for e in self.entries:
            if e.split not in SPLIT_NAMES:
                raise ValueError(f"entry {e.id!r} has unknown split {e.split!r}")
            if e.id in seen and seen[e.id] != e.split:
                raise ValueError(f"id {e.id!r} appears in two splits")
            seen[e.id] = e.split

    def save(self, path):
        self.validate()
        doc = {
            "version": self.version,
            "seed": self.seed,
            "fractions": list(self.fractions),
            "entries": [
                {"id": e.id, "lq_path": e.lq_path, "hq_path": e.hq_path, "split": e.split}
                for e in self.entries
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        manifest = cls(
            seed=int(doc["seed"]),
            fractions=tuple(doc["fractions"]),
            entries=[
                ManifestEntry(
                    id=e["id"], lq_path=e["lq_path"], hq_path=e["hq_path"], split=e["split"]
                )
                for e in doc["entries"]
            ],
            version=int(doc["version"]),
        )
        manifest.validate()
        return manifest


def split_dataset(entries, fractions=DEFAULT_FRACTIONS, seed=0):
    """Shuffle with the seed and assign contiguous train/test/validation runs.

    Test and validation counts are floor(fraction * n); the remainder goes
    to train.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, test, validation)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    n = len(entries)
    if n < 3:
        raise ValueError(f"need at least 3 samples to split, got {n}")
    n_test = math.floor(fractions[1] * n)
    n_val = math.floor(fractions[2] * n)
    n_train = n - n_test - n_val
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    out = []
    for pos, idx in enumerate(order):
        ident, lq_path, hq_path = entries[idx]
        if pos < n_train:
            split = "train"
        elif pos < n_train + n_test:
            split = "test"
        else:
            split = "validation"
        out.append(ManifestEntry(id=ident, lq_path=lq_path, hq_path=hq_path, split=split))
    manifest = DatasetManifest(seed=seed, fractions=tuple(fractions), entries=out)
    manifest.validate()
    return manifest


def match_pairs(lq_dir, hq_dir):
    """Match raw files across the two directories by filename stem."""
    def stems(d):
        out = {}
        for name in sorted(os.listdir(d)):
            stem, ext = os.path.splitext(name)
            if ext.lower() in (".tif", ".tiff", ".png"):
                out[stem] = os.path.join(d, name)
        return out

    lq, hq = stems(lq_dir), stems(hq_dir)
    common = sorted(set(lq) & set(hq))
    return [(stem, lq[stem], hq[stem]) for stem in common]
