"""Diagnostic instruments: frequency-domain error maps, pixel-feature
variance, grid visualization, and quantized-model evaluation."""

from __future__ import annotations

import numpy as np

from . import tasks
from .checkpoint import load_model
from .image_io import write_pgm
from .optim import dequantize, quantize_minmax

DIRECT_DFT_MAX = 4096  # elements; larger non-power-of-two inputs are rejected


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def _fft_radix2(x):
    """Iterative radix-2 FFT along the last axis (length a power of two)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    # bit-reversal permutation
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    bits = n.bit_length() - 1
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    lead = x.shape[:-1]
    out = x[..., rev]
    half = 1
    while half < n:
        tw = np.exp(-2j * np.pi * np.arange(half) / (2 * half))
        blocks = out.reshape(*lead, n // (2 * half), 2, half)
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * tw
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        half *= 2
    return out


def _direct_dft(x):
    """O(n^2) DFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ w.T


def fftshift2(a):
    h, w = a.shape
    return np.roll(np.roll(a, h // 2, axis=0), w // 2, axis=1)


class SpectrumMap:
    """DC-centered magnitudes of a 2D DFT, with the complex coefficients
    kept for energy bookkeeping."""

    def __init__(self, coefficients, source=""):
        self.coefficients = coefficients  # DC-centered complex [H, W]
        self.magnitudes = np.abs(coefficients)
        self.source = source

    @property
    def shape(self):
        return self.coefficients.shape

    def total_energy(self):
        return float(np.sum(self.magnitudes.astype(np.float64) ** 2))

    def high_band_energy(self):
        """Energy outside the centered half-Nyquist box (Chebyshev cutoff)."""
        h, w = self.shape
        fy = np.arange(h) - h // 2
        fx = np.arange(w) - w // 2
        low = (np.abs(fy)[:, None] <= h // 4) & (np.abs(fx)[None, :] <= w // 4)
        e = self.magnitudes.astype(np.float64) ** 2
        return float(e[~low].sum())

    def high_band_ratio(self):
        total = self.total_energy()
        if total == 0.0:
            return 0.0
        return self.high_band_energy() / total


def dft2(image, source=""):
    """Unnormalized 2D DFT of a real image, DC-centered.

    Power-of-two sides go through the radix-2 transform; anything else is
    computed directly and only up to {DIRECT_DFT_MAX} elements.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"dft2 expects a single-channel [H, W] image, got {image.shape}")
    h, w = image.shape
    if _is_pow2(h) and _is_pow2(w):
        rows = _fft_radix2(image.astype(np.complex128))
        cols = _fft_radix2(rows.T).T
    else:
        if h * w > DIRECT_DFT_MAX:
            raise ValueError(
                f"non-power-of-two image {h}x{w} exceeds the direct-DFT bound "
                f"of {DIRECT_DFT_MAX} elements"
            )
        rows = _direct_dft(image.astype(np.complex128))
        cols = _direct_dft(rows.T).T
    return SpectrumMap(fftshift2(cols), source=source)


def direct_dft2(image):
    """O(N^2) reference transform (DC-centered), for cross-checking."""
    image = np.asarray(image, dtype=np.complex128)
    rows = _direct_dft(image)
    return SpectrumMap(fftshift2(_direct_dft(rows.T).T))


def freq_error_map(pred, target, source="error"):
    """Spectrum of the signed error between two equal-shape images."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return dft2(pred - target, source=source)


def rgb_error_spectrum(pred, target):
    """Per-channel error spectra combined into (high, total, ratio)."""
    high = total = 0.0
    maps = []
    for c in range(pred.shape[2]):
        sm = freq_error_map(pred[:, :, c], target[:, :, c], source=f"channel{c}")
        maps.append(sm)
        high += sm.high_band_energy()
        total += sm.total_energy()
    ratio = 0.0 if total == 0 else high / total
    return maps, high, total, ratio


def pixel_feature_variance(features, channel_axis=-1):
    """Mean over channels of the population variance across pixels.

    ``features`` holds one row (or plane) per pixel; a single pixel has
    variance 0 by convention.
    """
    features = np.asarray(features, dtype=np.float64)
    features = np.moveaxis(features, channel_axis, -1)
    flat = features.reshape(-1, features.shape[-1])
    if flat.shape[0] <= 1:
        return 0.0
    return float(flat.var(axis=0).mean())


def stage_variances(model, coords, chunk=8192):
    """Streaming pixel-feature variance of every stage output."""
    from .tensor import no_grad

    acc = {}
    order = []
    with no_grad():
        for lo in range(0, len(coords), chunk):
            _, captured = model.forward(coords[lo : lo + chunk], capture=True)
            for name, t in captured:
                d = t.data.reshape(t.data.shape[0], -1).astype(np.float64)
                if name not in acc:
                    acc[name] = [0, np.zeros(d.shape[1]), np.zeros(d.shape[1])]
                    order.append(name)
                acc[name][0] += d.shape[0]
                acc[name][1] += d.sum(axis=0)
                acc[name][2] += (d * d).sum(axis=0)
    out = []
    for name in order:
        n, s, sq = acc[name]
        var = sq / n - (s / n) ** 2
        out.append((name, float(var.mean())))
    return out


def final_hidden_variance(model, coords, chunk=8192):
    """Pixel-feature variance of the feature entering the output layer
    (the post-modulation feature when a CAM stage sits there)."""
    variances = dict(stage_variances(model, coords, chunk))
    linear_idx = [i for i, s in enumerate(model.stages) if s.kind == "linear"]
    idx = linear_idx[-2]  # the linear feeding the output layer
    if idx + 1 < len(model.stages) and model.stages[idx + 1].kind == "cam":
        idx += 1
    return variances[f"stage{idx}:{model.stages[idx].kind}"]


def export_grid_image(grid, path, channel=0):
    """Min-max normalized 8-bit grayscale PGM of a rank-2 grid."""
    if grid.rank != 2:
        raise ValueError("grid visualization needs a rank-2 grid")
    values = grid.values.data[:, :, channel].astype(np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        pixels = np.full(values.shape, 128, dtype=np.uint8)
    else:
        pixels = np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    write_pgm(path, pixels)
    return pixels


def export_spectrum_image(spec, path, log_scale=False):
    mag = spec.magnitudes.astype(np.float64)
    if log_scale:
        mag = np.log1p(mag)
    lo, hi = mag.min(), mag.max()
    if hi == lo:
        pixels = np.full(mag.shape, 128, dtype=np.uint8)
    else:
        pixels = np.round((mag - lo) / (hi - lo) * 255.0).astype(np.uint8)
    write_pgm(path, pixels)
    return pixels


def quantize_model(model, bits):
    """Quantize-dequantize every trained parameter tensor layer-wise
    (grids included). 32-bit is the identity."""
    if bits == 32:
        return model
    for _, p in model.named_parameters():
        codes, scale, offset = quantize_minmax(p.data, bits)
        p.data = dequantize(codes, scale, offset, dtype=p.data.dtype)
    return model


def eval_quantized(checkpoint_path, bits, cfg):
    """Quantize a trained checkpoint and run the task's evaluation."""
    model = load_model(checkpoint_path)
    quantize_model(model, bits)
    return tasks.evaluate(cfg, model)
