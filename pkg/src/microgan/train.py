"""Alternating adversarial optimization with checkpoints and validation.

Odd iterations update the scorer on (generated, real) pairs with label 0;
even iterations update the enhancer with the composite objective. Every
``validation_every`` iterations the enhancer is scored on the validation
split (mean SSIM and PSNR of clamped outputs) and the best model so far,
ranked by SSIM then PSNR, is kept on disk. All randomness flows from the
config seed, so two runs produce byte-identical logs and checkpoints.
"""

import json
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .dataset import load_image
from .models import (
    Discriminator,
    Generator,
    LossWeights,
    discriminator_loss,
    discriminator_loss_grads,
    generator_loss_with_grads,
)
from .validation import NonFiniteError

CHECKPOINT_VERSION = 1
LOG_COLUMNS = (
    "iteration",
    "d_loss",
    "g_total",
    "g_mse_part",
    "g_ssim_part",
    "g_bce_part",
    "val_ssim",
    "val_psnr",
)


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable, truncated or mismatched."""


class FrozenModelError(RuntimeError):
    """A step modified parameters it was contractually bound to freeze."""


@dataclass
class AdamState:
    """Per-parameter moment estimates and step count."""

    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state, grads=None):
    """One update: biased moment averages, bias correction, scaled step."""
    if grads is None:
        grads = [p.grad for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g in zip(params, grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p.value -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


@dataclass
class TrainConfig:
    iterations: int
    checkpoint_every: int = 10000
    batch_size: int = 1
    seed: int = 0
    learning_rate: float = 1e-5
    weights: LossWeights = field(default_factory=LossWeights)
    validation_every: int = 100
    base_channels: int = 16
    fc_hidden: int = 64
    channel_cap: int = 256

    def __post_init__(self):
        for name in ("checkpoint_every", "batch_size", "validation_every", "base_channels"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def _params_checksum(params):
    crc = 0
    for p in params:
        crc = zlib.crc32(p.value.tobytes(), crc)
    return crc


def train_discriminator_step(batch, generator, discriminator, opt_state):
    """Score a generated/real pair with label 0 and update only the scorer."""
    x, y = batch
    frozen = _params_checksum(generator.params())
    gx, _ = generator.forward(x)
    d_fake, cache_fake = discriminator.forward(gx, want_cache=True)
    d_real, cache_real = discriminator.forward(y, want_cache=True)
    loss = discriminator_loss(d_fake, d_real, y=0)
    g_fake, g_real = discriminator_loss_grads(d_fake, d_real, y=0)
    discriminator.zero_grad()
    discriminator.backward(cache_fake, g_fake, accumulate=True)
    discriminator.backward(cache_real, g_real, accumulate=True)
    adam_step(discriminator.params(), opt_state)
    if _params_checksum(generator.params()) != frozen:
        raise FrozenModelError("discriminator step modified generator parameters")
    return loss


def train_generator_step(batch, generator, discriminator, opt_state, weights=None):
    """Update only the enhancer with the composite objective (label 1)."""
    x, y = batch
    frozen = _params_checksum(discriminator.params())
    gx, cache_gen = generator.forward(x, want_cache=True)
    d_fake, cache_fake = discriminator.forward(gx, want_cache=True)
    d_real, _ = discriminator.forward(y)
    total, parts, d_gx, g_fake = generator_loss_with_grads(gx, y, d_fake, d_real, weights)
    d_gx = d_gx + discriminator.backward(cache_fake, g_fake, accumulate=False)
    generator.zero_grad()
    generator.backward(cache_gen, d_gx.astype(np.float32), accumulate=True)
    adam_step(generator.params(), opt_state)
    if _params_checksum(discriminator.params()) != frozen:
        raise FrozenModelError("generator step modified discriminator parameters")
    return total, parts


# ---------------------------------------------------------------------------
# checkpoint file: one JSON header line, then raw little-endian float32
# payload in header-declared parameter order

def _meta_number(v):
    if v is None:
        return None
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _parse_meta_number(v):
    if v is None:
        return None
    return float(v)


def save_checkpoint(model, meta, path):
    """Atomically write the model topology, metadata and parameter payload."""
    params = model.params()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model": model.config(),
        "params": [{"name": p.name, "shape": list(p.value.shape)} for p in params],
        "iteration": int(meta.get("iteration", 0)),
        "val_ssim": _meta_number(meta.get("val_ssim")),
        "val_psnr": _meta_number(meta.get("val_psnr")),
        "seed": int(meta.get("seed", 0)),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
    os.replace(tmp, path)
    return path


def _build_model(config):
    kind = config.get("kind")
    kwargs = {k: v for k, v in config.items() if k != "kind"}
    if kind == "generator":
        return Generator(**kwargs)
    if kind == "discriminator":
        return Discriminator(**kwargs)
    raise CheckpointError(f"unknown model kind {kind!r}")


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, header)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header in {path}: {exc}") from exc
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {header.get('format_version')!r}"
            )
        model = _build_model(header["model"])
        params = model.params()
        declared = {d["name"]: tuple(d["shape"]) for d in header["params"]}
        actual = {p.name: p.value.shape for p in params}
        if declared != actual:
            differing = sorted(
                (set(declared) ^ set(actual))
                | {n for n in set(declared) & set(actual) if declared[n] != actual[n]}
            )
            raise CheckpointError(f"checkpoint topology mismatch for parameters: {differing}")
        order = [d["name"] for d in header["params"]]
        by_name = {p.name: p for p in params}
        payload_size = sum(
            4 * int(np.prod(declared[name], dtype=np.int64)) for name in order
        )
        payload = fh.read(payload_size + 1)
        if len(payload) != payload_size:
            raise CheckpointError(
                f"truncated or oversized checkpoint {path}: expected {payload_size} "
                f"payload bytes, got {len(payload)}"
            )
    offset = 0
    for name in order:
        p = by_name[name]
        n = int(np.prod(p.value.shape, dtype=np.int64))
        chunk = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        p.value = chunk.reshape(p.value.shape).copy()
        offset += 4 * n
    header["val_ssim"] = _parse_meta_number(header.get("val_ssim"))
    header["val_psnr"] = _parse_meta_number(header.get("val_psnr"))
    return model, header


# ---------------------------------------------------------------------------
# the loop

def _load_split(manifest, name, base_dir):
    entries = manifest.split(name)
    pairs = []
    for e in entries:
        lq = load_image(os.path.join(base_dir, e.lq_path))
        hq = load_image(os.path.join(base_dir, e.hq_path))
        pairs.append((lq, hq))
    return pairs


def _validate(generator, val_pairs):
    ssims, psnrs = [], []
    for lq, hq in val_pairs:
        gen, _ = generator.forward(lq[None].astype(np.float32))
        gen = np.clip(gen[0], 0.0, 1.0)
        ssims.append(metrics.ssim(gen, hq))
        psnrs.append(metrics.psnr(gen, hq))
    return float(np.mean(ssims)), float(np.mean(psnrs))


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def train_loop(
    manifest,
    config,
    out_dir,
    base_dir=".",
    generator=None,
    discriminator=None,
    progress=None,
):
    """Run the alternating optimization on a manifest's train/validation
    splits; returns (final_path, best_path)."""
    train_pairs = _load_split(manifest, "train", base_dir)
    val_pairs = _load_split(manifest, "validation", base_dir)
    return train_loop_pairs(
        train_pairs,
        val_pairs,
        config,
        out_dir,
        generator=generator,
        discriminator=discriminator,
        progress=progress,
    )


def train_loop_pairs(
    train_pairs,
    val_pairs,
    config,
    out_dir,
    generator=None,
    discriminator=None,
    progress=None,
):
    """As :func:`train_loop` but on in-memory (lq, hq) array pairs.

    Writes ``training_log.csv`` (one row per validation), periodic
    ``iter_NNNNNNNN.ckpt`` files, ``best.ckpt`` at every validation
    improvement and ``final.ckpt`` at the end.
    """
    os.makedirs(out_dir, exist_ok=True)
    if not train_pairs:
        raise ValueError("training split is empty")
    if not val_pairs:
        raise ValueError("validation split is empty")

    channels, height, width = train_pairs[0][0].shape
    if generator is None:
        generator = Generator(
            in_channels=channels, base_channels=config.base_channels, seed=config.seed
        )
    if discriminator is None:
        discriminator = Discriminator(
            in_channels=channels,
            base_channels=config.base_channels,
            input_size=height,
            fc_hidden=config.fc_hidden,
            channel_cap=config.channel_cap,
            seed=config.seed + 1,
        )

    opt_g = AdamState(learning_rate=config.learning_rate)
    opt_d = AdamState(learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)

    log_path = os.path.join(out_dir, "training_log.csv")
    best_path = os.path.join(out_dir, "best.ckpt")
    final_path = os.path.join(out_dir, "final.ckpt")
    best_ssim, best_psnr = -np.inf, -np.inf
    last_val = (None, None)
    last_d = math.nan
    last_g_total = math.nan
    last_parts = {"mse": math.nan, "ssim": math.nan, "bce": math.nan}

    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        log.write(",".join(LOG_COLUMNS) + "\n")
        for iteration in range(1, config.iterations + 1):
            idx = rng.integers(0, len(train_pairs), size=config.batch_size)
            x = np.stack([train_pairs[i][0] for i in idx]).astype(np.float32)
            y = np.stack([train_pairs[i][1] for i in idx]).astype(np.float32)
            if iteration % 2 == 1:
                last_d = train_discriminator_step((x, y), generator, discriminator, opt_d)
            else:
                last_g_total, last_parts = train_generator_step(
                    (x, y), generator, discriminator, opt_g, config.weights
                )
            if iteration % config.validation_every == 0:
                val_ssim, val_psnr = _validate(generator, val_pairs)
                last_val = (val_ssim, val_psnr)
                row = [
                    iteration,
                    last_d,
                    last_g_total,
                    last_parts["mse"],
                    last_parts["ssim"],
                    last_parts["bce"],
                    val_ssim,
                    val_psnr,
                ]
                line = ",".join(_format_value(v) for v in row)
                log.write(line + "\n")
                if progress is not None:
                    progress(dict(zip(LOG_COLUMNS, row)))
                if val_ssim > best_ssim or (val_ssim == best_ssim and val_psnr > best_psnr):
                    best_ssim, best_psnr = val_ssim, val_psnr
                    save_checkpoint(
                        generator,
                        {
                            "iteration": iteration,
                            "val_ssim": val_ssim,
                            "val_psnr": val_psnr,
                            "seed": config.seed,
                        },
                        best_path,
                    )
            if iteration % config.checkpoint_every == 0:
                save_checkpoint(
                    generator,
                    {
                        "iteration": iteration,
                        "val_ssim": last_val[0],
                        "val_psnr": last_val[1],
                        "seed": config.seed,
                    },
                    os.path.join(out_dir, f"iter_{iteration:08d}.ckpt"),
                )

    save_checkpoint(
        generator,
        {
            "iteration": config.iterations,
            "val_ssim": last_val[0],
            "val_psnr": last_val[1],
            "seed": config.seed,
        },
        final_path,
    )
    if not os.path.exists(best_path):
        save_checkpoint(
            generator,
            {"iteration": config.iterations, "seed": config.seed},
            best_path,
        )
    return final_path, best_path
