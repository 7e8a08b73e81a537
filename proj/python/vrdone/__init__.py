"""Python bindings for the vrdone relation detector."""

from ._core import (
    ConfigError,
    DataError,
    average_precision,
    evaluate,
    hungarian,
    infer,
    predicates,
    pyramid_lengths,
    synth,
    t_iou,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "average_precision",
    "evaluate",
    "hungarian",
    "infer",
    "predicates",
    "pyramid_lengths",
    "synth",
    "t_iou",
    "train",
]
