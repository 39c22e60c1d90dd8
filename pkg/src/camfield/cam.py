"""Coordinate-aware modulation: standardize a feature, then scale and shift
it with values interpolated from learnable grids at the input coordinates.

Three unit layouts are supported:

* ``scalar``  - features [N, C], one (gamma, beta) per sample, statistics
  over the channel axis.
* ``ray``     - features [N, S, C], one (gamma, beta) per ray unit,
  statistics jointly over the S x C slab.
* ``channel`` - features [N, C, H, W], one (gamma, beta) per (sample,
  channel), statistics per channel plane (configurable to the full
  [C, H, W] unit, trading cost for the larger normalization unit).

Freshly built layers start as pure standardization (gamma grids at 1, beta
grids at 0); with normalization also disabled they are the identity map.
"""

from __future__ import annotations

import numpy as np

from .grid import ModulationGrid
from .tensor import DEFAULT_DTYPE

MODES = ("scalar", "ray", "channel")


def select_coords(coords, selector):
    """Column subset of a coordinate array, in the declared order.

    ``coords`` may be [N, D], or [N, S, D] for ray packs, where the selected
    components are constant along the pack and are read from the first
    sample. ``selector=None`` keeps all columns.
    """
    coords = np.asarray(coords)
    if coords.ndim == 3:
        coords = coords[:, 0, :]
    if coords.ndim == 1:
        coords = coords[:, None]
    if selector is None:
        return coords
    d = coords.shape[1]
    for idx in selector:
        if not 0 <= idx < d:
            raise ValueError(f"coordinate selector index {idx} out of range for D={d}")
    return coords[:, list(selector)]


class CamLayer:
    """Normalization + grid-modulation unit."""

    kind = "cam"

    def __init__(
        self,
        mode,
        grid_resolutions,
        channels=1,
        selector=None,
        normalize=True,
        eps=1e-5,
        norm_axes=None,
        dtype=DEFAULT_DTYPE,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown CAM mode {mode!r}")
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        if mode in ("scalar", "ray") and channels != 1:
            raise ValueError(f"{mode} mode uses single-channel grids, got k={channels}")
        self.mode = mode
        self.normalize = bool(normalize)
        self.eps = float(eps)
        self.selector = tuple(selector) if selector is not None else None
        if norm_axes is not None:
            norm_axes = tuple(norm_axes)
            if mode != "channel" or norm_axes not in ((2, 3), (1, 2, 3)):
                raise ValueError(f"unsupported norm_axes {norm_axes} for mode {mode}")
        self.norm_axes = norm_axes
        # Identity start: scale grid at 1, shift grid at 0.
        self.gamma = ModulationGrid(grid_resolutions, channels, fill=1.0, dtype=dtype)
        self.beta = ModulationGrid(grid_resolutions, channels, fill=0.0, dtype=dtype)
        if self.selector is not None and len(self.selector) != self.gamma.rank:
            raise ValueError(
                f"selector dimension {len(self.selector)} must equal grid rank "
                f"{self.gamma.rank}"
            )

    @property
    def channels(self):
        return self.gamma.channels

    def _modulation(self, coords, n):
        xsel = select_coords(coords, self.selector)
        if xsel.shape[1] != self.gamma.rank:
            raise ValueError(
                f"selected coordinates have {xsel.shape[1]} components, "
                f"grid rank is {self.gamma.rank}"
            )
        if xsel.shape[0] != n:
            raise ValueError(
                f"feature batch {n} != coordinate batch {xsel.shape[0]}"
            )
        return self.gamma.interp(xsel), self.beta.interp(xsel)

    def __call__(self, features, coords):
        if self.mode == "scalar":
            return cam_scalar(self, features, coords)
        if self.mode == "ray":
            return cam_ray(self, features, coords)
        return cam_channel(self, features, coords)

    def parameters(self):
        return [self.gamma.values, self.beta.values]


def _apply(layer, features, gamma, beta, axes):
    if layer.normalize:
        features = features.standardize(axes, layer.eps)
    return gamma * features + beta


def cam_scalar(layer, features, coords):
    """Modulate [N, C] features with one scalar pair per sample."""
    if layer.mode != "scalar":
        raise ValueError("layer is not in scalar mode")
    if features.ndim != 2:
        raise ValueError(f"scalar mode expects [N, C] features, got {features.shape}")
    if features.shape[1] == 0:
        raise ValueError("scalar mode needs at least one channel")
    gamma, beta = layer._modulation(coords, features.shape[0])
    return _apply(layer, features, gamma, beta, (1,))


def cam_ray(layer, features, coords):
    """Modulate [N, S, C] features with one scalar pair per ray unit."""
    if layer.mode != "ray":
        raise ValueError("layer is not in ray mode")
    if features.ndim != 3:
        raise ValueError(f"ray mode expects [N, S, C] features, got {features.shape}")
    if features.shape[1] == 0 or features.shape[2] == 0:
        raise ValueError("ray mode needs nonempty S and C extents")
    gamma, beta = layer._modulation(coords, features.shape[0])
    gamma = gamma.reshape(features.shape[0], 1, 1)
    beta = beta.reshape(features.shape[0], 1, 1)
    return _apply(layer, features, gamma, beta, (1, 2))


def cam_channel(layer, features, coords):
    """Modulate [N, C, H, W] features with one pair per (sample, channel).

    The grids hold one column per feature channel (k = C), or a single
    shared column (k = 1); normalization defaults to each channel plane
    and may instead cover the full [C, H, W] unit.
    """
    if layer.mode != "channel":
        raise ValueError("layer is not in channel mode")
    if features.ndim != 4:
        raise ValueError(
            f"channel mode expects [N, C, H, W] features, got {features.shape}"
        )
    n, c, h, w = features.shape
    if h * w == 0:
        raise ValueError("channel mode needs a nonempty spatial plane")
    if layer.channels not in (1, c):
        raise ValueError(
            f"grid has {layer.channels} channels, features have {c}"
        )
    gamma, beta = layer._modulation(coords, n)
    k = layer.channels
    gamma = gamma.reshape(n, k, 1, 1)
    beta = beta.reshape(n, k, 1, 1)
    axes = layer.norm_axes if layer.norm_axes is not None else (2, 3)
    return _apply(layer, features, gamma, beta, axes)
