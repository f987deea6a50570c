"""Event-camera steering with CNNs converted to spiking networks.

The heavy lifting lives in the compiled ``evsnn._core`` module; this package
re-exports it and adds a couple of numpy conveniences.
"""

from . import _core
from ._core import (
    ANN_OPS,
    ARCH_NEURONS,
    ARCH_PARAMETERS,
    SAMPLE_EVENTS,
    EvsnnError,
    Model,
    decode_address,
    encode_address,
    filter_outliers,
    generate_recording,
    read_aedat,
    run_stage,
    training_frame,
    write_aedat,
)

__all__ = [
    "ANN_OPS",
    "ARCH_NEURONS",
    "ARCH_PARAMETERS",
    "SAMPLE_EVENTS",
    "EvsnnError",
    "Model",
    "decode_address",
    "encode_address",
    "filter_outliers",
    "generate_recording",
    "read_aedat",
    "run_stage",
    "training_frame",
    "write_aedat",
    "count_frame",
]


def count_frame(events, width=36, height=36):
    """Per-pixel event counts of a structured event array, shape (height, width)."""
    import numpy as np

    frame = np.zeros((height, width), dtype=np.int32)
    np.add.at(frame, (events["y"], events["x"]), 1)
    return frame
