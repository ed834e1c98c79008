"""Invertible recurrent inference machines for synthetic MRI reconstruction."""

from ._core import (
    ConfigError,
    IoError,
    Model,
    NumericalError,
    ShapeError,
    __version__,
    adjoint,
    build_dataset,
    evaluate,
    forward,
    generate_phantom,
    gradcheck,
    make_mask,
    nmse,
    psnr,
    roundtrip_error,
    ssim,
    train,
)

__all__ = [
    "ConfigError",
    "IoError",
    "Model",
    "NumericalError",
    "ShapeError",
    "__version__",
    "adjoint",
    "build_dataset",
    "evaluate",
    "forward",
    "generate_phantom",
    "gradcheck",
    "make_mask",
    "nmse",
    "psnr",
    "roundtrip_error",
    "ssim",
    "train",
]
