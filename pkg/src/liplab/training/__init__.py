from .augment import augment
from .loops import (
    EpochRecord,
    TrainConfig,
    TrainRun,
    autoencoder_corr2d,
    bottleneck_corr2d,
    check_compatible,
    decode_prediction,
    decoded_corr2d,
    load_train_config,
    predict_codes,
    reconstruct,
    train_autoencoder,
    train_lipreader,
)
from .losses import (
    DegenerateCorrelationWarning,
    LossSpec,
    batch_loss,
    corrmse,
    loss_value,
    mse,
    pearson,
)
from .optim import AdamState, PlateauState, adam_step, plateau_update

__all__ = [
    "AdamState",
    "DegenerateCorrelationWarning",
    "EpochRecord",
    "LossSpec",
    "PlateauState",
    "TrainConfig",
    "TrainRun",
    "adam_step",
    "augment",
    "autoencoder_corr2d",
    "batch_loss",
    "bottleneck_corr2d",
    "check_compatible",
    "corrmse",
    "decode_prediction",
    "decoded_corr2d",
    "load_train_config",
    "loss_value",
    "mse",
    "pearson",
    "plateau_update",
    "predict_codes",
    "reconstruct",
    "train_autoencoder",
    "train_lipreader",
]
