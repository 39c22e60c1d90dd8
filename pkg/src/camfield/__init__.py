"""Neural fields with coordinate-aware modulation.

MLP intermediate features are standardized and then scaled/shifted by
values read from learnable coordinate-indexed grids, trained end to end
by gradient descent on signal-fitting tasks.
"""

from .cam import CamLayer, cam_channel, cam_ray, cam_scalar, select_coords
from .config import ConfigError, TrainConfig, parse_config, serialize_config
from .grid import ModulationGrid, grid_grad_weights, interp1, interp2
from .nn import (
    FieldModel,
    FourierEncoding,
    LinearLayer,
    PositionalEncoding,
    Relu,
    Reshape,
    Sigmoid,
    init_linear,
)
from .optim import Adam, LrSchedule, dequantize, quantize_minmax
from .tasks import (
    ImageDataset,
    Signal1DSpec,
    eval_signal1d,
    make_signal1d,
    psnr,
    split_generalization,
    train,
)
from .tensor import Tensor, concat, elementwise, no_grad

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CamLayer",
    "ConfigError",
    "FieldModel",
    "FourierEncoding",
    "ImageDataset",
    "LinearLayer",
    "LrSchedule",
    "ModulationGrid",
    "PositionalEncoding",
    "Relu",
    "Reshape",
    "Sigmoid",
    "Signal1DSpec",
    "Tensor",
    "TrainConfig",
    "cam_channel",
    "cam_ray",
    "cam_scalar",
    "concat",
    "dequantize",
    "elementwise",
    "eval_signal1d",
    "grid_grad_weights",
    "init_linear",
    "interp1",
    "interp2",
    "make_signal1d",
    "no_grad",
    "parse_config",
    "psnr",
    "quantize_minmax",
    "select_coords",
    "serialize_config",
    "split_generalization",
    "train",
]
