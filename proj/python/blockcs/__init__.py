"""Learned block compressed sensing: trainable sampling plus SDA/CNN reconstruction."""

from ._blockcs import (
    BLOCK_SIDE,
    BLOCK_SIZE,
    RATES,
    ConfigError,
    DataError,
    DivergenceError,
    Error,
    FormatError,
    IoError,
    Model,
    ModeError,
    ShapeError,
    VersionError,
    baseline_reconstruct_image,
    build_model,
    evaluate,
    forward,
    load_gray,
    load_model,
    measurement_count,
    model_from_bytes,
    psnr,
    reconstruct_image,
    sample,
    save_pgm,
    train,
    training_blocks,
    verify,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
