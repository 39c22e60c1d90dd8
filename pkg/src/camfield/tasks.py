"""Task harnesses: data generation, coordinate conventions, batching, the
training loop, and metrics.

Tasks:

* ``signal1d``               - regress a sum of ten sinusoids on [0, 1].
* ``image-regression``       - fit an RGB image on its own pixel grid.
* ``image-generalization``   - train on the every-other-pixel subsample,
  evaluate on the full grid.
* ``synthetic-ray``          - fit a band-limited function of ray-packed
  5D coordinates (exercises per-ray modulation end to end).
* ``synthetic-video-tensor`` - fit a small synthetic [T, C, H, W] tensor
  from time coordinates (exercises per-channel modulation end to end).
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import checkpoint as ckpt_io
from .cam import CamLayer
from .image_io import read_image
from .nn import (
    FieldModel,
    FourierEncoding,
    PositionalEncoding,
    Relu,
    Reshape,
    Sigmoid,
    init_linear,
)
from .optim import Adam, LrSchedule
from .tensor import Tensor, no_grad


# ---------------------------------------------------------------------------
# metrics


def psnr(pred, target, peak=1.0):
    """10 log10(peak^2 / MSE); identical inputs give float('inf')."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"psnr: shape mismatch {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred.astype(np.float64) - target.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


# ---------------------------------------------------------------------------
# 1D signal


class Signal1DSpec:
    """f(x) = sum_i sin(2 pi k_i x + phi_i), k_i in {5, 10, ..., 50}."""

    def __init__(self, seed, sample_count=512):
        self.seed = int(seed)
        self.sample_count = int(sample_count)
        self.frequencies = np.arange(5, 51, 5, dtype=np.float64)
        rng = np.random.default_rng(seed)
        self.phases = rng.uniform(0.0, 2.0 * np.pi, size=10)

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        acc = np.zeros_like(x)
        for k, phi in zip(self.frequencies, self.phases):
            acc += np.sin(2.0 * np.pi * k * x + phi)
        return acc


def make_signal1d(seed, sample_count=512):
    return Signal1DSpec(seed, sample_count)


def eval_signal1d(spec, x):
    return spec.evaluate(x)


# ---------------------------------------------------------------------------
# images


class ImageDataset:
    """Flat pixel dataset: coords [N, 2] in (0, 1)^2, targets [N, 3].

    Pixel (r, c) of an H x W image maps to ((c + 0.5) / W, (r + 0.5) / H),
    keeping every coordinate strictly inside the unit square.
    """

    def __init__(self, coords, targets, shape):
        self.coords = coords
        self.targets = targets
        self.shape = shape  # (H, W)

    @classmethod
    def from_array(cls, img):
        img = np.asarray(img, dtype=np.float32)
        h, w, _ = img.shape
        cols, rows = np.meshgrid(np.arange(w), np.arange(h))
        coords = np.stack(
            [(cols.ravel() + 0.5) / w, (rows.ravel() + 0.5) / h], axis=1
        ).astype(np.float64)
        return cls(coords, img.reshape(-1, img.shape[2]), (h, w))

    def __len__(self):
        return self.coords.shape[0]

    def image(self, values=None):
        v = self.targets if values is None else values
        h, w = self.shape
        return np.asarray(v).reshape(h, w, -1)


def split_generalization(img):
    """Train on the even-(r, c) subsample, evaluate on the full grid.

    The subsample is treated as its own half-resolution lattice, so its
    coordinates are the 2x2 block centers of the full image.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"generalization split needs even dimensions, got {h}x{w}")
    train = ImageDataset.from_array(img[::2, ::2])
    full = ImageDataset.from_array(img)
    return train, full


# ---------------------------------------------------------------------------
# procedurally generated test images (the reference datasets are not
# redistributed; these have known, controllable spectra)


def make_natural_image(size=256, seed=7):
    """A natural-statistics stand-in: smooth shading, roughly 1/f oriented
    texture across the whole band, and hard edges. Built spatially so no
    transform code is reused. Hard enough that a coordinate MLP does not
    saturate within a few thousand iterations."""
    rng = np.random.default_rng(seed)
    h = w = int(size)
    ys, xs = np.meshgrid(
        (np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij"
    )
    base = 0.15 + 0.3 * xs + 0.2 * ys
    for _ in range(6):
        cx, cy = rng.uniform(0.1, 0.9, 2)
        sig = rng.uniform(0.08, 0.3)
        amp = rng.uniform(-0.35, 0.35)
        base = base + amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sig**2))
    # dense 1/f texture: random-phase spectral synthesis, energy at every
    # frequency and orientation (sparse sums of sinusoids are too easy for
    # a Fourier-feature network to compress)
    fy = np.fft.fftfreq(h)[:, None] * h
    fx = np.fft.rfftfreq(w)[None, :] * w
    radius = np.sqrt(fy**2 + fx**2)
    amplitude = np.where(radius > 0, 1.0 / np.maximum(radius, 1.0) ** 0.95, 0.0)

    def spectral_noise():
        phases = rng.uniform(0, 2 * np.pi, amplitude.shape)
        field = np.fft.irfft2(amplitude * np.exp(1j * phases), s=(h, w))
        return field / field.std()

    texture = spectral_noise()
    disk = ((xs - 0.62) ** 2 + (ys - 0.38) ** 2) < 0.04
    bar = (np.abs(xs - 0.25) < 0.06) & (ys > 0.55)
    wedge = (xs + ys > 1.45) & (xs - ys < 0.1)
    channels = []
    for ch in range(3):
        tint = rng.uniform(0.85, 1.15)
        img = tint * base + 0.2 * texture + 0.08 * spectral_noise()
        img = img + (0.18 if ch == 0 else -0.12) * disk
        img = img + (-0.15 if ch == 2 else 0.1) * bar
        img = img + (0.12 if ch == 1 else -0.08) * wedge
        channels.append(img)
    out = np.stack(channels, axis=2)
    lo, hi = out.min(), out.max()
    return (0.03 + 0.94 * (out - lo) / (hi - lo)).astype(np.float32)


def make_checkerboard(size=64, period=4):
    rc = np.add.outer(np.arange(size) // period, np.arange(size) // period) % 2
    return np.repeat(rc.astype(np.float32)[:, :, None], 3, axis=2)


def make_bandnoise(size=64, seed=3, max_freq=8.0, terms=20):
    """Sum of random sinusoids with spatial frequency <= max_freq."""
    rng = np.random.default_rng(seed)
    ys, xs = np.meshgrid(
        (np.arange(size) + 0.5) / size, (np.arange(size) + 0.5) / size, indexing="ij"
    )
    img = np.zeros((size, size))
    for _ in range(terms):
        freq = rng.uniform(0.5, max_freq)
        angle = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.2, 1.0) * np.sin(
            2 * np.pi * freq * (np.cos(angle) * xs + np.sin(angle) * ys) + phase
        )
    img = (img - img.min()) / (img.max() - img.min())
    return np.repeat((0.05 + 0.9 * img).astype(np.float32)[:, :, None], 3, axis=2)


# ---------------------------------------------------------------------------
# synthetic ray / video-tensor datasets


def make_ray_dataset(seed, n_rays=128, samples_per_ray=8):
    """Ray-packed coordinates [N, S, 5] = (x, y, z, azimuth, elevation) and a
    band-limited scalar target [N, S, 1]; directional columns are constant
    along each ray."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, size=(n_rays, 1, 3))
    b = rng.uniform(0.0, 1.0, size=(n_rays, 1, 3))
    t = ((np.arange(samples_per_ray) + 0.5) / samples_per_ray)[None, :, None]
    points = a + t * (b - a)
    dirs = rng.uniform(0.0, 1.0, size=(n_rays, 1, 2)).repeat(samples_per_ray, axis=1)
    coords = np.concatenate([points, dirs], axis=2)
    target = np.zeros((n_rays, samples_per_ray))
    for _ in range(6):
        wvec = rng.uniform(-3.0, 3.0, size=5)
        phase = rng.uniform(0, 2 * np.pi)
        target += rng.uniform(0.3, 1.0) * np.sin(
            2 * np.pi * (coords @ wvec) + phase
        )
    return coords, target[:, :, None].astype(np.float32)


def make_video_dataset(seed, frames=16, channels=4, height=8, width=8):
    """Times [T, 1] and a drifting-pattern target tensor [T, C, H, W] in
    (0, 1)."""
    rng = np.random.default_rng(seed)
    t = ((np.arange(frames) + 0.5) / frames)[:, None]
    hh = (np.arange(height) + 0.5) / height
    ww = (np.arange(width) + 0.5) / width
    video = np.zeros((frames, channels, height, width))
    for c in range(channels):
        fy, fx, ft = rng.uniform(0.5, 3.0, 3)
        phase = rng.uniform(0, 2 * np.pi)
        pattern = np.sin(
            2 * np.pi * (fy * hh[:, None] + fx * ww[None, :])[None, :, :]
            + 2 * np.pi * ft * t[:, 0][:, None, None]
            + phase
        )
        video[:, c] = 0.5 + 0.4 * pattern
    return t, video.astype(np.float32)


# ---------------------------------------------------------------------------
# model construction


def _grid_channels(cfg, feature_channels):
    if cfg.grid_channels == "match":
        return feature_channels
    return int(cfg.grid_channels)


def build_model(cfg):
    """FieldModel for a config; layer seeds derive from the run seed."""
    stages = []
    in_dim = cfg.in_dim
    width = in_dim
    if cfg.encoding == "fourier":
        enc = FourierEncoding(in_dim, cfg.fourier_frequencies, cfg.fourier_sigma, seed=cfg.seed)
        stages.append(enc)
        width = enc.out_dim
    elif cfg.encoding == "pe":
        enc = PositionalEncoding(in_dim, cfg.pe_frequencies, cfg.pe_include_input,
                                 cfg.pe_spacing)
        stages.append(enc)
        width = enc.out_dim
    elif cfg.encoding != "none":
        raise ValueError(f"unknown encoding kind {cfg.encoding!r}")

    if cfg.task == "synthetic-video-tensor":
        return _build_video_model(cfg, stages, width)

    widths = list(cfg.hidden) + [cfg.out_dim]
    n_linear = len(widths)
    for li, out_w in enumerate(widths, start=1):
        stages.append(init_linear(width, out_w, seed=_layer_seed(cfg.seed, li)))
        width = out_w
        last = li == n_linear
        if not last and li in cfg.cam_layers:
            stages.append(
                CamLayer(
                    cfg.cam_mode,
                    cfg.grid_resolution,
                    channels=_grid_channels(cfg, out_w),
                    selector=cfg.cam_selector,
                    normalize=cfg.normalize,
                    eps=cfg.eps,
                )
            )
        if not last:
            stages.append(Relu())
        elif cfg.head == "sigmoid":
            stages.append(Sigmoid())
    return FieldModel(stages, cfg.in_dim, cfg.out_dim)


def _build_video_model(cfg, stages, width):
    """Time -> MLP -> [C, H, W] tensor with per-channel modulation."""
    c, h, w = cfg.video_channels, cfg.video_height, cfg.video_width
    li = 0
    for li, hidden_w in enumerate(cfg.hidden, start=1):
        stages.append(init_linear(width, hidden_w, seed=_layer_seed(cfg.seed, li)))
        stages.append(Relu())
        width = hidden_w
    stages.append(init_linear(width, c * h * w, seed=_layer_seed(cfg.seed, li + 1)))
    stages.append(Reshape((c, h, w)))
    if cfg.cam_layers:
        stages.append(
            CamLayer(
                "channel",
                cfg.grid_resolution,
                channels=_grid_channels(cfg, c),
                selector=cfg.cam_selector,
                normalize=cfg.normalize,
                eps=cfg.eps,
                norm_axes=cfg.norm_axes,
            )
        )
    if cfg.head == "sigmoid":
        stages.append(Sigmoid())
    return FieldModel(stages, cfg.in_dim, c * h * w)


def _layer_seed(seed, index):
    return (int(seed) * 1000003 + index * 7919) % (2**63)


# ---------------------------------------------------------------------------
# training


class TrainRun:
    """Outcome of one training: the model, the metric log, final metrics."""

    def __init__(self, config, model):
        self.config = config
        self.model = model
        self.log = []  # (iteration, loss, psnr-or-None, lr_network)
        self.final_loss = None
        self.final_psnr = None
        self.eval_psnr = None
        self.best_loss = None

    def write_log(self, path):
        with open(path, "w") as f:
            for it, loss, p, lr in self.log:
                ps = "" if p is None else repr(p)
                f.write(f"{it}\t{loss!r}\t{ps}\t{lr!r}\n")


def predict(model, coords, chunk=8192, features=None):
    """Chunked no-grad forward pass; returns a plain array."""
    out = []
    with no_grad():
        for lo in range(0, len(coords), chunk):
            sl = slice(lo, lo + chunk)
            if features is None:
                out.append(model.forward(coords[sl]).data)
            else:
                out.append(model.forward_from(features[sl], coords[sl]).data)
    return np.concatenate(out, axis=0)


def _make_batcher(n, batch, rng):
    """Epoch-shuffled minibatch index stream; batch <= 0 means full batch."""
    if batch <= 0 or batch >= n:
        idx = np.arange(n)
        while True:
            yield idx
    while True:
        order = rng.permutation(n)
        for lo in range(0, n - batch + 1, batch):
            yield order[lo : lo + batch]


def _load_task_data(cfg):
    """(train_coords, train_targets, eval_coords, eval_targets, peak)."""
    if cfg.task == "signal1d":
        spec = make_signal1d(cfg.seed + 101, cfg.samples)
        x = np.linspace(0.0, 1.0, cfg.samples)
        y = spec.evaluate(x).astype(np.float32)[:, None]
        coords = x[:, None]
        return coords, y, coords, y, 1.0
    if cfg.task in ("image-regression", "image-generalization"):
        if not cfg.image:
            raise ValueError(f"task {cfg.task} requires an image path")
        img = read_image(cfg.image)
        if cfg.task == "image-regression":
            ds = ImageDataset.from_array(img)
            return ds.coords, ds.targets, ds.coords, ds.targets, 1.0
        train, full = split_generalization(img)
        return train.coords, train.targets, full.coords, full.targets, 1.0
    if cfg.task == "synthetic-ray":
        coords, target = make_ray_dataset(cfg.seed + 202, cfg.rays, cfg.ray_samples)
        return coords, target, coords, target, 1.0
    if cfg.task == "synthetic-video-tensor":
        t, video = make_video_dataset(
            cfg.seed + 303, cfg.video_frames, cfg.video_channels,
            cfg.video_height, cfg.video_width,
        )
        return t, video, t, video, 1.0
    raise ValueError(f"unknown task {cfg.task!r}")


def train(cfg, out_dir=None, log_to=None):
    """Run the full loop: forward, MSE, backward, Adam step, schedule.

    Deterministic given the config seed. Emits the checkpoint and metric
    log into ``out_dir`` when given. Aborts on a non-finite loss with the
    iteration number.
    """
    train_coords, train_targets, eval_coords, eval_targets, peak = _load_task_data(cfg)
    model = build_model(cfg)
    run = TrainRun(cfg, model)

    schedule = LrSchedule(
        {"network": cfg.lr_network, "grid": cfg.lr_grid},
        cfg.milestones,
        cfg.decay_factor,
    )
    opt = Adam(model.parameter_groups(), schedule)

    # the encoding is fixed, so encode the full training set once
    enc_train = model.encode(train_coords)
    enc_eval = enc_train if eval_coords is train_coords else model.encode(eval_coords)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xBA7C4)))
    batcher = _make_batcher(len(train_coords), cfg.batch, rng)
    flat_eval_targets = eval_targets

    best_loss = math.inf
    for it in range(cfg.iterations):
        idx = next(batcher)
        full = len(idx) == len(train_coords)
        coords_b = train_coords if full else train_coords[idx]
        pred = model.forward_from(
            enc_train if full else enc_train[idx], coords_b
        )
        target_b = Tensor(train_targets if full else train_targets[idx])
        loss = (pred - target_b).square().mean()
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        best_loss = min(best_loss, loss_val)
        opt.zero_grad()
        loss.backward()
        opt.step(it)
        opt.check_finite()

        lr_now = schedule.lr_at(it)["network"]
        p = None
        if cfg.psnr_every and ((it + 1) % cfg.psnr_every == 0 or it == cfg.iterations - 1):
            pred_eval = predict(model, eval_coords, features=enc_eval)
            p = psnr(pred_eval, flat_eval_targets, peak)
        run.log.append((it, loss_val, p, lr_now))
        if log_to is not None and (it % 100 == 0 or it == cfg.iterations - 1):
            print(f"iter {it}  loss {loss_val:.6f}" + (f"  psnr {p:.2f}" if p else ""), file=log_to)

    pred_eval = predict(model, eval_coords, features=enc_eval)
    run.eval_psnr = psnr(pred_eval, flat_eval_targets, peak)
    pred_train = predict(model, train_coords, features=enc_train)
    run.final_psnr = psnr(pred_train, train_targets, peak)
    run.final_loss = float(
        np.mean((pred_train.astype(np.float64) - train_targets.astype(np.float64)) ** 2)
    )
    run.best_loss = best_loss

    if out_dir is not None:
        run.write_log(os.path.join(out_dir, "metrics.tsv"))
        ckpt_io.save_model(os.path.join(out_dir, "checkpoint.bin"), model)
    return run


def evaluate(cfg, model):
    """Task-defined evaluation PSNR for a (possibly quantized) model."""
    _, _, eval_coords, eval_targets, peak = _load_task_data(cfg)
    pred = predict(model, eval_coords)
    return psnr(pred, eval_targets, peak)
