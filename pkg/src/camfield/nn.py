"""Model building blocks: coordinate encodings, linear layers, activations,
and the FieldModel composition mapping coordinates to signal values.

Coordinates are always pre-normalized to [0, 1] by the task harnesses; the
model rejects anything outside (the modulation grids are defined on the
unit domain).
"""

from __future__ import annotations

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor

COORD_TOL = 1e-6


class FourierEncoding:
    """Random Gaussian Fourier features, fixed (never trained).

    The projection matrix has entries drawn from N(0, sigma^2) under a
    stored seed, so the same seed and configuration always reproduce the
    same encoding. Output per row is [cos(2 pi B x), sin(2 pi B x)].
    """

    kind = "encoding"

    def __init__(self, in_dim, frequencies, sigma, seed, matrix=None, dtype=DEFAULT_DTYPE):
        self.in_dim = int(in_dim)
        self.frequencies = int(frequencies)
        self.sigma = float(sigma)
        self.seed = int(seed)
        if matrix is None:
            rng = np.random.default_rng(seed)
            matrix = rng.normal(0.0, sigma, size=(frequencies, in_dim))
        self.matrix = np.asarray(matrix, dtype=dtype)
        self.out_dim = 2 * self.frequencies

    def encode(self, coords):
        proj = (2.0 * np.pi * coords @ self.matrix.T.astype(np.float64)).astype(
            self.matrix.dtype
        )
        return np.concatenate([np.cos(proj), np.sin(proj)], axis=-1)


class PositionalEncoding:
    """Deterministic sinusoidal frequency encoding.

    ``spacing="linear"`` emits sin/cos of 2 pi j x for harmonics j = 1..L
    (the convention of the 1D spectral-bias experiments, where the encoding
    deliberately tops out below the target bandwidth); ``spacing="pow2"``
    emits sin/cos of 2^j pi x for j < L. Optionally prepends the raw input.
    """

    kind = "encoding"

    def __init__(self, in_dim, frequencies, include_input=True, spacing="linear",
                 dtype=DEFAULT_DTYPE):
        if spacing not in ("linear", "pow2"):
            raise ValueError(f"unknown frequency spacing {spacing!r}")
        self.in_dim = int(in_dim)
        self.frequencies = int(frequencies)
        self.include_input = bool(include_input)
        self.spacing = spacing
        self.dtype = np.dtype(dtype)
        self.out_dim = in_dim * 2 * frequencies + (in_dim if include_input else 0)

    def encode(self, coords):
        coords = np.asarray(coords, dtype=np.float64)
        parts = [coords] if self.include_input else []
        for j in range(self.frequencies):
            if self.spacing == "linear":
                scaled = 2.0 * np.pi * (j + 1) * coords
            else:
                scaled = (2.0**j) * np.pi * coords
            parts.append(np.sin(scaled))
            parts.append(np.cos(scaled))
        return np.concatenate(parts, axis=-1).astype(self.dtype)


class LinearLayer:
    kind = "linear"

    def __init__(self, weight, bias):
        self.weight = weight if isinstance(weight, Tensor) else Tensor(weight, requires_grad=True)
        self.bias = bias if isinstance(bias, Tensor) else Tensor(bias, requires_grad=True)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"inconsistent linear shapes: weight {self.weight.shape}, bias {self.bias.shape}"
            )
        if not (self.weight.all_finite() and self.bias.all_finite()):
            raise ValueError("linear layer initialized with non-finite values")

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def __call__(self, x):
        return x @ self.weight.transpose() + self.bias

    def parameters(self):
        return [self.weight, self.bias]


def init_linear(in_dim, out_dim, seed, dtype=DEFAULT_DTYPE):
    """Uniform weights in [-1/sqrt(in), +1/sqrt(in)], zero bias, per seed."""
    if in_dim <= 0 or out_dim <= 0:
        raise ValueError(f"linear dims must be positive, got {in_dim} -> {out_dim}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)
    b = np.zeros(out_dim, dtype=dtype)
    return LinearLayer(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))


class Relu:
    kind = "activation"
    name = "relu"

    def __call__(self, x):
        return x.relu()


class Sigmoid:
    kind = "activation"
    name = "sigmoid"

    def __call__(self, x):
        return x.sigmoid()


class Reshape:
    """Reshape per-sample features, e.g. [N, C*H*W] -> [N, C, H, W]."""

    kind = "reshape"

    def __init__(self, target):
        self.target = tuple(int(d) for d in target)

    def __call__(self, x):
        return x.reshape((x.shape[0],) + self.target)


class FieldModel:
    """Ordered composition of encoding, linear, activation, CAM, and reshape
    stages. At most one encoding stage is allowed and it must come first."""

    def __init__(self, stages, in_dim, out_dim):
        self.stages = list(stages)
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self._validate()

    def _validate(self):
        kinds = [s.kind for s in self.stages]
        if "encoding" in kinds[1:]:
            raise ValueError("encoding stage must be first")
        width = self.in_dim
        if kinds and kinds[0] == "encoding":
            if self.stages[0].in_dim != self.in_dim:
                raise ValueError(
                    f"encoding expects {self.stages[0].in_dim}-dim coordinates, "
                    f"model declares {self.in_dim}"
                )
            width = self.stages[0].out_dim
        for s in self.stages:
            if s.kind == "linear":
                if s.in_dim != width:
                    raise ValueError(
                        f"linear stage expects width {s.in_dim}, previous stage "
                        f"produces {width}"
                    )
                width = s.out_dim
            elif s.kind == "reshape":
                if int(np.prod(s.target)) != width:
                    raise ValueError(
                        f"reshape target {s.target} incompatible with width {width}"
                    )
                width = s.target[-1]
        self.encoding = self.stages[0] if kinds and kinds[0] == "encoding" else None

    def _check_coords(self, coords):
        coords = np.asarray(coords)
        if coords.size and (
            coords.min() < -COORD_TOL or coords.max() > 1.0 + COORD_TOL
        ):
            raise ValueError(
                "coordinates must be normalized to [0, 1]; got range "
                f"[{coords.min()}, {coords.max()}]"
            )
        return coords

    def encode(self, coords):
        """Encoding-stage output as a plain array (cache-friendly: the
        encoding is deterministic and parameter-free)."""
        coords = self._check_coords(coords)
        if self.encoding is None:
            return np.asarray(coords, dtype=DEFAULT_DTYPE)
        return self.encoding.encode(coords)

    def forward(self, coords, capture=False):
        coords = self._check_coords(coords)
        return self.forward_from(self.encode(coords), coords, capture=capture)

    def forward_from(self, features, coords, capture=False):
        """Run the post-encoding stages on pre-encoded features."""
        f = features if isinstance(features, Tensor) else Tensor(features)
        captured = []
        for i, stage in enumerate(self.stages):
            if stage.kind == "encoding":
                pass  # already applied
            elif stage.kind == "cam":
                f = stage(f, coords)
            else:
                f = stage(f)
            if capture:
                captured.append((f"stage{i}:{stage.kind}", f))
        if capture:
            return f, captured
        return f

    def named_parameters(self):
        out = []
        for i, stage in enumerate(self.stages):
            if stage.kind == "linear":
                out.append((f"stage{i}.weight", stage.weight))
                out.append((f"stage{i}.bias", stage.bias))
            elif stage.kind == "cam":
                out.append((f"stage{i}.gamma", stage.gamma.values))
                out.append((f"stage{i}.beta", stage.beta.values))
        return out

    def parameter_groups(self):
        """Parameters split into the network group and the grid group (the
        two groups train at different learning rates)."""
        network, grids = [], []
        for name, p in self.named_parameters():
            (grids if name.endswith(("gamma", "beta")) else network).append((name, p))
        return {"network": network, "grid": grids}

    def cam_layers(self):
        return [s for s in self.stages if s.kind == "cam"]
