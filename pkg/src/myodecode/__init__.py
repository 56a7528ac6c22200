"""Streaming surface-EMG motor decoding: filters, MAV feature bank,
Gram-Schmidt feature selection and a Kalman decoder, plus protocol
simulation and analysis tools."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CorruptionError, DataError, IllPosedError, InvalidArgumentError, InvalidSpecError,
    MyoDecodeError, NumericalError, SequencingError,
)
from .features import enumerate_features, compute_mav  # noqa: E402
from .kalman import KalmanModel, DecodeState, train_kalman, decode_step, decode_session  # noqa: E402
from .selection import SelectionResult, gram_schmidt_select, apply_selection  # noqa: E402
from .signal_chain import FilterSpec, design_butterworth, design_notch, acquisition_cascade  # noqa: E402
from .streaming import StreamingPipeline  # noqa: E402

__all__ = [
    "CorruptionError", "DataError", "IllPosedError", "InvalidArgumentError", "InvalidSpecError",
    "MyoDecodeError", "NumericalError", "SequencingError",
    "enumerate_features", "compute_mav",
    "KalmanModel", "DecodeState", "train_kalman", "decode_step", "decode_session",
    "SelectionResult", "gram_schmidt_select", "apply_selection",
    "FilterSpec", "design_butterworth", "design_notch", "acquisition_cascade",
    "StreamingPipeline",
]
