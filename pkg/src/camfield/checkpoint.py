"""Versioned binary model container.

Layout (all little-endian): an 8-byte magic, a u32 format version, the
declared model dims, then one record per stage carrying a type tag, a
shape header, and raw IEEE-754 single-precision parameter payloads. The
Fourier seed and scale are stored alongside the projection matrix itself,
so encodings reproduce exactly on reload.
"""

from __future__ import annotations

import struct

import numpy as np

from .cam import CamLayer
from .nn import (
    FieldModel,
    FourierEncoding,
    LinearLayer,
    PositionalEncoding,
    Relu,
    Reshape,
    Sigmoid,
)
from .tensor import Tensor

MAGIC = b"CAMFCKPT"
VERSION = 1

_TAG_FOURIER = 1
_TAG_PE = 2
_TAG_LINEAR = 3
_TAG_RELU = 4
_TAG_SIGMOID = 5
_TAG_CAM = 6
_TAG_RESHAPE = 7

_MODES = ("scalar", "ray", "channel")
_NORM_AXES = {None: 0, (2, 3): 1, (1, 2, 3): 2}
_NORM_AXES_REV = {v: k for k, v in _NORM_AXES.items()}


def _pack_array(f, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.tobytes())


def _unpack_array(f):
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
    n = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape)
    return data.astype(np.float32)


def save_model(path, model):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, model.in_dim, model.out_dim))
        f.write(struct.pack("<I", len(model.stages)))
        for stage in model.stages:
            _save_stage(f, stage)


def _save_stage(f, stage):
    if isinstance(stage, FourierEncoding):
        f.write(struct.pack("<B", _TAG_FOURIER))
        f.write(struct.pack("<IIdq", stage.in_dim, stage.frequencies, stage.sigma, stage.seed))
        _pack_array(f, stage.matrix)
    elif isinstance(stage, PositionalEncoding):
        f.write(struct.pack("<B", _TAG_PE))
        f.write(struct.pack(
            "<IIBB", stage.in_dim, stage.frequencies, int(stage.include_input),
            0 if stage.spacing == "linear" else 1,
        ))
    elif isinstance(stage, LinearLayer):
        f.write(struct.pack("<B", _TAG_LINEAR))
        _pack_array(f, stage.weight.data)
        _pack_array(f, stage.bias.data)
    elif isinstance(stage, Relu):
        f.write(struct.pack("<B", _TAG_RELU))
    elif isinstance(stage, Sigmoid):
        f.write(struct.pack("<B", _TAG_SIGMOID))
    elif isinstance(stage, CamLayer):
        f.write(struct.pack("<B", _TAG_CAM))
        sel = stage.selector if stage.selector is not None else ()
        f.write(
            struct.pack(
                "<BBdBB",
                _MODES.index(stage.mode),
                int(stage.normalize),
                stage.eps,
                1 if stage.selector is not None else 0,
                len(sel),
            )
        )
        if sel:
            f.write(struct.pack(f"<{len(sel)}I", *sel))
        f.write(struct.pack("<B", _NORM_AXES[stage.norm_axes]))
        f.write(struct.pack("<B", stage.gamma.rank))
        f.write(struct.pack(f"<{stage.gamma.rank}I", *stage.gamma.resolutions))
        f.write(struct.pack("<I", stage.gamma.channels))
        _pack_array(f, stage.gamma.values.data)
        _pack_array(f, stage.beta.values.data)
    elif isinstance(stage, Reshape):
        f.write(struct.pack("<B", _TAG_RESHAPE))
        f.write(struct.pack("<I", len(stage.target)))
        f.write(struct.pack(f"<{len(stage.target)}I", *stage.target))
    else:
        raise ValueError(f"cannot serialize stage {stage!r}")


def load_model(path):
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        version, in_dim, out_dim = struct.unpack("<III", f.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (n_stages,) = struct.unpack("<I", f.read(4))
        stages = [_load_stage(f) for _ in range(n_stages)]
    return FieldModel(stages, in_dim, out_dim)


def _load_stage(f):
    (tag,) = struct.unpack("<B", f.read(1))
    if tag == _TAG_FOURIER:
        in_dim, m, sigma, seed = struct.unpack("<IIdq", f.read(24))
        matrix = _unpack_array(f)
        return FourierEncoding(in_dim, m, sigma, seed, matrix=matrix)
    if tag == _TAG_PE:
        in_dim, L, include, spacing = struct.unpack("<IIBB", f.read(10))
        return PositionalEncoding(in_dim, L, bool(include),
                                  "linear" if spacing == 0 else "pow2")
    if tag == _TAG_LINEAR:
        w = _unpack_array(f)
        b = _unpack_array(f)
        return LinearLayer(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))
    if tag == _TAG_RELU:
        return Relu()
    if tag == _TAG_SIGMOID:
        return Sigmoid()
    if tag == _TAG_CAM:
        mode_i, normalize, eps, has_sel, sel_n = struct.unpack("<BBdBB", f.read(12))
        selector = None
        if sel_n:
            selector = struct.unpack(f"<{sel_n}I", f.read(4 * sel_n))
        elif has_sel:
            selector = ()
        (axes_code,) = struct.unpack("<B", f.read(1))
        (rank,) = struct.unpack("<B", f.read(1))
        dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
        (channels,) = struct.unpack("<I", f.read(4))
        gamma = _unpack_array(f)
        beta = _unpack_array(f)
        layer = CamLayer(
            _MODES[mode_i],
            dims,
            channels=channels,
            selector=selector,
            normalize=bool(normalize),
            eps=eps,
            norm_axes=_NORM_AXES_REV[axes_code],
        )
        layer.gamma.values.data = gamma
        layer.beta.values.data = beta
        return layer
    if tag == _TAG_RESHAPE:
        (n,) = struct.unpack("<I", f.read(4))
        return Reshape(struct.unpack(f"<{n}I", f.read(4 * n)))
    raise ValueError(f"unknown stage tag {tag}")
