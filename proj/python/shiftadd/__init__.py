"""Multiplication-free shift/add network kernels and training loop."""

from ._shiftadd import (
    ConfigError,
    GeometryError,
    IoError,
    NumericError,
    ShiftWeights,
    add_backward,
    add_forward,
    choose_scale,
    shift_backward,
    shift_forward,
    shift_init,
    snap,
    train,
    unit_energy,
)

__all__ = [
    "ConfigError",
    "GeometryError",
    "IoError",
    "NumericError",
    "ShiftWeights",
    "add_backward",
    "add_forward",
    "choose_scale",
    "shift_backward",
    "shift_forward",
    "shift_init",
    "snap",
    "train",
    "unit_energy",
]
