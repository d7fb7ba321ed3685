"""PPG-to-ECG translation with a diagnosis head, built on a small numpy autodiff engine."""

from .autodiff import Tensor
from .network import ModelParams, compressed_architecture, count_params, forward, full_architecture
from .waveform_prep import CycleExample, WaveformRecord

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "ModelParams",
    "CycleExample",
    "WaveformRecord",
    "compressed_architecture",
    "count_params",
    "forward",
    "full_architecture",
]
