"""Plain-text run configuration: ``key = value`` lines under ``[section]``
headers. Unknown sections and keys are rejected (configs encode experiment
hyperparameters; a typo must not silently change the experiment), and every
error carries its line number. Parsing fills task-dependent defaults and
the parsed config serializes back to an equivalent file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

TASKS = (
    "signal1d",
    "image-regression",
    "image-generalization",
    "synthetic-ray",
    "synthetic-video-tensor",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str
    image: str = ""
    seed: int = 0
    samples: int = 512
    rays: int = 128
    ray_samples: int = 8
    video_frames: int = 16
    video_channels: int = 4
    video_height: int = 8
    video_width: int = 8
    hidden: tuple = (64, 64, 64)
    encoding: str = "pe"
    fourier_frequencies: int = 256
    fourier_sigma: float = 10.0
    pe_frequencies: int = 16
    pe_include_input: bool = True
    pe_spacing: str = "linear"
    head: str = "none"
    cam_layers: tuple = ()
    cam_mode: str = "scalar"
    cam_selector: tuple | None = None
    normalize: bool = True
    eps: float = 1e-5
    norm_axes: tuple | None = None
    grid_resolution: tuple = (64,)
    grid_channels: object = 1  # int or the string "match"
    lr_network: float = 1e-3
    lr_grid: float = 1e-3
    milestones: tuple = ()
    decay_factor: float = 0.1
    iterations: int = 1500
    batch: int = 0
    psnr_every: int = 100
    bits: int = 32
    out: str = ""

    @property
    def in_dim(self):
        return {"signal1d": 1, "image-regression": 2, "image-generalization": 2,
                "synthetic-ray": 5, "synthetic-video-tensor": 1}[self.task]

    @property
    def out_dim(self):
        if self.task in ("image-regression", "image-generalization"):
            return 3
        if self.task == "synthetic-video-tensor":
            return self.video_channels * self.video_height * self.video_width
        return 1


_TASK_DEFAULTS = {
    "signal1d": dict(
        hidden=(64, 64, 64), encoding="pe", head="none", cam_mode="scalar",
        grid_resolution=(64,), lr_network=1e-3, lr_grid=1e-2, milestones=(),
        iterations=1500, batch=0, psnr_every=100,
    ),
    "image-regression": dict(
        hidden=(256, 256, 256), encoding="fourier", head="sigmoid",
        cam_mode="scalar", grid_resolution=(32, 32), lr_network=1e-3,
        lr_grid=1e-2, milestones=(1000, 1500), iterations=2000, batch=16384,
        psnr_every=100,
    ),
    "synthetic-ray": dict(
        hidden=(32, 32), encoding="none", head="none", cam_mode="ray",
        cam_selector=(3, 4), grid_resolution=(8, 8), lr_network=1e-3,
        lr_grid=1e-2, milestones=(), iterations=400, batch=0, psnr_every=100,
    ),
    "synthetic-video-tensor": dict(
        hidden=(64,), encoding="pe", pe_frequencies=4, head="sigmoid",
        cam_mode="channel", grid_resolution=(10,), grid_channels="match",
        lr_network=1e-3, lr_grid=1e-2, milestones=(), iterations=400,
        batch=0, psnr_every=100,
    ),
}
_TASK_DEFAULTS["image-generalization"] = dict(_TASK_DEFAULTS["image-regression"])


def _to_int(v):
    return int(v)


def _to_float(v):
    return float(v)


def _to_bool(v):
    lv = v.strip().lower()
    if lv in ("true", "yes", "1"):
        return True
    if lv in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _to_int_tuple(v):
    v = v.strip()
    if not v:
        return ()
    return tuple(int(part) for part in v.split(","))


def _to_str(v):
    return v.strip()


def _to_channels(v):
    v = v.strip()
    if v == "match":
        return v
    return int(v)


def _to_norm_unit(v):
    v = v.strip().lower()
    if v == "hw":
        return (2, 3)
    if v == "chw":
        return (1, 2, 3)
    raise ValueError(f"norm unit must be 'hw' or 'chw', got {v!r}")


# (config field, converter) per section/key
_SCHEMA = {
    "task": {
        "kind": ("task", _to_str),
        "image": ("image", _to_str),
        "seed": ("seed", _to_int),
        "samples": ("samples", _to_int),
        "rays": ("rays", _to_int),
        "ray_samples": ("ray_samples", _to_int),
        "frames": ("video_frames", _to_int),
        "vchannels": ("video_channels", _to_int),
        "vheight": ("video_height", _to_int),
        "vwidth": ("video_width", _to_int),
    },
    "model": {
        "hidden": ("hidden", _to_int_tuple),
        "encoding": ("encoding", _to_str),
        "fourier_frequencies": ("fourier_frequencies", _to_int),
        "fourier_sigma": ("fourier_sigma", _to_float),
        "pe_frequencies": ("pe_frequencies", _to_int),
        "pe_include_input": ("pe_include_input", _to_bool),
        "pe_spacing": ("pe_spacing", _to_str),
        "head": ("head", _to_str),
        "cam_layers": ("cam_layers", _to_int_tuple),
        "cam_mode": ("cam_mode", _to_str),
        "cam_selector": ("cam_selector", _to_int_tuple),
        "normalize": ("normalize", _to_bool),
        "eps": ("eps", _to_float),
        "norm_unit": ("norm_axes", _to_norm_unit),
    },
    "grid": {
        "resolution": ("grid_resolution", _to_int_tuple),
        "channels": ("grid_channels", _to_channels),
    },
    "optim": {
        "lr_network": ("lr_network", _to_float),
        "lr_grid": ("lr_grid", _to_float),
        "milestones": ("milestones", _to_int_tuple),
        "decay_factor": ("decay_factor", _to_float),
    },
    "run": {
        "iterations": ("iterations", _to_int),
        "batch": ("batch", _to_int),
        "psnr_every": ("psnr_every", _to_int),
        "bits": ("bits", _to_int),
        "out": ("out", _to_str),
    },
}


def parse_config(text):
    """Parse config text into a fully validated TrainConfig."""
    section = None
    assigned = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        field, conv = _SCHEMA[section][key]
        if field in assigned:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} (first set on line {lines[field]})"
            )
        try:
            assigned[field] = conv(value)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {e}") from None
        lines[field] = lineno

    if "task" not in assigned:
        raise ConfigError("missing required key 'kind' in [task]")
    task = assigned["task"]
    if task not in TASKS:
        raise ConfigError(f"line {lines['task']}: unknown task kind {task!r}")

    merged = dict(_TASK_DEFAULTS[task])
    merged.update(assigned)
    merged["task"] = task
    cfg = TrainConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.task in ("image-regression", "image-generalization") and not cfg.image:
        raise ConfigError(f"task {cfg.task} requires 'image' in [task]")
    if cfg.encoding not in ("none", "pe", "fourier"):
        raise ConfigError(f"unknown encoding {cfg.encoding!r}")
    if cfg.head not in ("none", "sigmoid"):
        raise ConfigError(f"unknown head {cfg.head!r}")
    if cfg.cam_mode not in ("scalar", "ray", "channel"):
        raise ConfigError(f"unknown cam mode {cfg.cam_mode!r}")
    if cfg.pe_spacing not in ("linear", "pow2"):
        raise ConfigError(f"unknown pe spacing {cfg.pe_spacing!r}")
    if not cfg.hidden or any(h <= 0 for h in cfg.hidden):
        raise ConfigError(f"hidden widths must be positive, got {cfg.hidden}")
    n_linear = len(cfg.hidden) + 1
    for placement in cfg.cam_layers:
        if not 1 <= placement < n_linear:
            raise ConfigError(
                f"cam layer placement {placement} out of range (1..{n_linear - 1})"
            )
    if len(cfg.grid_resolution) not in (1, 2) or any(d < 2 for d in cfg.grid_resolution):
        raise ConfigError(f"bad grid resolution {cfg.grid_resolution}")
    if cfg.grid_channels != "match" and int(cfg.grid_channels) < 1:
        raise ConfigError(f"bad grid channels {cfg.grid_channels}")
    if cfg.iterations <= 0:
        raise ConfigError("iterations must be positive")
    if cfg.lr_network <= 0 or cfg.lr_grid <= 0:
        raise ConfigError("learning rates must be positive")
    if any(b <= a for a, b in zip(cfg.milestones, cfg.milestones[1:])):
        raise ConfigError(f"milestones must be strictly increasing, got {cfg.milestones}")
    if cfg.bits not in (32, 8, 6):
        raise ConfigError(f"bits must be 32, 8, or 6, got {cfg.bits}")
    if cfg.eps < 0:
        raise ConfigError("eps must be nonnegative")
    if cfg.samples < 2:
        raise ConfigError("signal1d needs at least 2 samples")
    if cfg.out and cfg.image and cfg.out == cfg.image:
        raise ConfigError("output directory and input image must be distinct paths")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def serialize_config(cfg):
    """Write the config (defaults filled) back to parseable text."""
    by_field = {}
    for section, keys in _SCHEMA.items():
        for key, (field, _) in keys.items():
            by_field[field] = (section, key)
    sections = {name: [] for name in _SCHEMA}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name not in by_field:
            continue
        section, key = by_field[f.name]
        if value is None:
            continue
        if f.name == "norm_axes":
            value = "hw" if value == (2, 3) else "chw"
        if f.name == "task":
            key = "kind"
        sections[section].append(f"{key} = {_fmt(value)}")
    parts = []
    for name in ("task", "model", "grid", "optim", "run"):
        parts.append(f"[{name}]")
        parts.extend(sections[name])
        parts.append("")
    return "\n".join(parts)


def variant(cfg, **changes):
    """Config copy with fields replaced (used by the ablation driver)."""
    new = replace(cfg, **changes)
    _validate(new)
    return new
