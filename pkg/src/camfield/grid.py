"""Learnable interpolated grids for scale/shift modulation parameters.

A grid is a lattice of trainable values over the closed unit interval per
axis (node ``i`` sits at ``i / (d - 1)``, so the first and last nodes lie on
the domain boundary). Queries read values by linear (rank 1) or bilinear
(rank 2) interpolation and are differentiable with respect to the node
values; out-of-range coordinates are a caller bug and are rejected.
"""

from __future__ import annotations

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor

COORD_TOL = 1e-6


class ModulationGrid:
    """Rank-1 or rank-2 grid of ``channels`` trainable values per node."""

    def __init__(self, resolutions, channels=1, fill=0.0, dtype=DEFAULT_DTYPE):
        if isinstance(resolutions, int):
            resolutions = (resolutions,)
        resolutions = tuple(int(d) for d in resolutions)
        if len(resolutions) not in (1, 2):
            raise ValueError(f"grid rank must be 1 or 2, got {len(resolutions)}")
        if any(d < 2 for d in resolutions):
            raise ValueError(f"every grid resolution must be >= 2, got {resolutions}")
        if channels < 1:
            raise ValueError("grid needs at least one channel")
        self.resolutions = resolutions
        self.channels = int(channels)
        self.values = Tensor(
            np.full(resolutions + (self.channels,), fill, dtype=dtype),
            requires_grad=True,
        )

    @property
    def rank(self):
        return len(self.resolutions)

    def interp(self, coords):
        """Interpolated values at ``coords`` ([N] or [N,rank]) -> [N, channels]."""
        if self.rank == 1:
            return interp1(self, coords)
        return interp2(self, coords)


def _axis_weights(x, d, name):
    """Cell index and fractional offset along one axis."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(initial=0.0), x.max(initial=0.0)
    if lo < -COORD_TOL or hi > 1.0 + COORD_TOL:
        raise ValueError(
            f"{name}: query coordinates must lie in [0, 1], got range [{lo}, {hi}]"
        )
    s = np.clip(x, 0.0, 1.0) * (d - 1)
    i = np.minimum(s.astype(np.int64), d - 2)
    t = s - i
    return i, t


def interp1(grid, x):
    """Piecewise-linear read of a rank-1 grid at ``x`` in [0, 1] -> [N, k]."""
    if grid.rank != 1:
        raise ValueError("interp1 needs a rank-1 grid")
    x = np.asarray(x)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"interp1: expected [N] coordinates, got shape {x.shape}")
    (d,) = grid.resolutions
    i, t = _axis_weights(x, d, "interp1")
    values = grid.values
    vd = values.data
    w1 = t.astype(vd.dtype)[:, None]
    w0 = vd.dtype.type(1.0) - w1
    out = vd[i] * w0 + vd[i + 1] * w1

    def bw(g):
        gv = np.zeros_like(vd)
        np.add.at(gv, i, g * w0)
        np.add.at(gv, i + 1, g * w1)
        values._accumulate(gv)

    return Tensor._make(out, (values,), bw)


def interp2(grid, xy):
    """Separable bilinear read of a rank-2 grid at ``xy`` in [0,1]^2 -> [N, k]."""
    if grid.rank != 2:
        raise ValueError("interp2 needs a rank-2 grid")
    xy = np.asarray(xy)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError(f"interp2: expected [N,2] coordinates, got shape {xy.shape}")
    d1, d2 = grid.resolutions
    i1, t1 = _axis_weights(xy[:, 0], d1, "interp2")
    i2, t2 = _axis_weights(xy[:, 1], d2, "interp2")
    values = grid.values
    vd = values.data
    u1 = t1.astype(vd.dtype)[:, None]
    u2 = t2.astype(vd.dtype)[:, None]
    one = vd.dtype.type(1.0)
    w00 = (one - u1) * (one - u2)
    w10 = u1 * (one - u2)
    w01 = (one - u1) * u2
    w11 = u1 * u2
    out = (
        vd[i1, i2] * w00
        + vd[i1 + 1, i2] * w10
        + vd[i1, i2 + 1] * w01
        + vd[i1 + 1, i2 + 1] * w11
    )

    def bw(g):
        gv = np.zeros_like(vd)
        np.add.at(gv, (i1, i2), g * w00)
        np.add.at(gv, (i1 + 1, i2), g * w10)
        np.add.at(gv, (i1, i2 + 1), g * w01)
        np.add.at(gv, (i1 + 1, i2 + 1), g * w11)
        values._accumulate(gv)

    return Tensor._make(out, (values,), bw)


def grid_grad_weights(grid, coords):
    """Touched node indices and interpolation weights per query.

    Returns ``(indices, weights)``: rank 1 gives indices [N,2] and weights
    [N,2]; rank 2 gives indices [N,4,2] and weights [N,4]. Weights per query
    sum to 1 and equal the sensitivity of the interpolated value to each
    touched node.
    """
    if grid.rank == 1:
        x = np.asarray(coords)
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        (d,) = grid.resolutions
        i, t = _axis_weights(x, d, "grid_grad_weights")
        idx = np.stack([i, i + 1], axis=1)
        w = np.stack([1.0 - t, t], axis=1)
        return idx, w
    xy = np.asarray(coords)
    d1, d2 = grid.resolutions
    i1, t1 = _axis_weights(xy[:, 0], d1, "grid_grad_weights")
    i2, t2 = _axis_weights(xy[:, 1], d2, "grid_grad_weights")
    idx = np.stack(
        [
            np.stack([i1, i2], axis=1),
            np.stack([i1 + 1, i2], axis=1),
            np.stack([i1, i2 + 1], axis=1),
            np.stack([i1 + 1, i2 + 1], axis=1),
        ],
        axis=1,
    )
    w = np.stack(
        [(1 - t1) * (1 - t2), t1 * (1 - t2), (1 - t1) * t2, t1 * t2], axis=1
    )
    return idx, w
