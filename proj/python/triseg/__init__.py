"""Python access to the triseg segmentation core."""

from ._triseg import (
    INPUT_SIZE,
    THRESHOLD,
    Confusion,
    DataError,
    Net,
    confusion,
    iou,
    load_checkpoint,
    phantoms,
    rates,
    save_checkpoint,
)

__all__ = [
    "INPUT_SIZE",
    "THRESHOLD",
    "Confusion",
    "DataError",
    "Net",
    "confusion",
    "iou",
    "load_checkpoint",
    "phantoms",
    "rates",
    "save_checkpoint",
]
