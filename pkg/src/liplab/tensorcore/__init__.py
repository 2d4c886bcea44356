from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .ops import (
    RunningMoments,
    batchnorm,
    conv3d_same,
    dense,
    dropout,
    elu,
    gaussian_noise,
    leaky_relu,
    lstm_seq,
    maxpool3d,
    mean_all,
    reshape,
    sigmoid,
    square,
    sum_all,
    tanh,
    transpose,
)
from .tensor import ShapeError, Tensor, as_tensor, make_result

__all__ = [
    "CheckpointError",
    "RunningMoments",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "batchnorm",
    "conv3d_same",
    "dense",
    "dropout",
    "elu",
    "gaussian_noise",
    "grad_check",
    "leaky_relu",
    "load_checkpoint",
    "lstm_seq",
    "make_result",
    "maxpool3d",
    "mean_all",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "square",
    "sum_all",
    "tanh",
    "transpose",
]
