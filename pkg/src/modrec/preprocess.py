"""I/Q to normalized amplitude/phase conversion for the classifier input.

Amplitude is min-max normalized per frame into [0, 1]; phase is raw atan2
divided by pi, landing in [-1, 1] with no unwrapping. A degenerate frame
with constant amplitude normalizes to all zeros.
"""

from dataclasses import dataclass

import numpy as np

from .siggen import Dataset, IqFrame


@dataclass
class ApMatrix:
    """N x 2 matrix: column 0 normalized amplitude, column 1 phase / pi."""

    data: np.ndarray
    label: int
    snr_db: float
    frame_id: int = -1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[1] != 2:
            raise ValueError(f"ApMatrix data must be (N, 2), got {self.data.shape}")

    @property
    def n(self):
        return self.data.shape[0]


def iq_to_ap(frame: IqFrame):
    """Amplitude sqrt(I^2+Q^2) and phase atan2(Q, I)/pi per sample."""
    samples = np.asarray(frame.samples, dtype=np.complex128)
    amplitude = np.abs(samples)
    phase = np.arctan2(samples.imag, samples.real) / np.pi
    return amplitude, phase


def normalize_amplitude(amplitude):
    """Min-max map onto [0, 1]; a constant array maps to all zeros."""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    if amplitude.size == 0:
        raise ValueError("amplitude array must be non-empty")
    if not np.all(np.isfinite(amplitude)):
        raise ValueError("amplitude array must be finite")
    lo = amplitude.min()
    hi = amplitude.max()
    if hi == lo:
        return np.zeros_like(amplitude)
    return (amplitude - lo) / (hi - lo)


def to_input_matrix(frame: IqFrame) -> ApMatrix:
    """Column-stack normalized amplitude and phase, preserving the tags."""
    amplitude, phase = iq_to_ap(frame)
    data = np.column_stack([normalize_amplitude(amplitude), phase]).astype(np.float32)
    return ApMatrix(data, frame.label, frame.snr_db, frame.frame_id)


def to_ap_dataset(dataset: Dataset) -> Dataset:
    """Convert an I/Q dataset to the A/P domain, keeping split and names."""
    if dataset.domain == "ap":
        return dataset
    frames = [to_input_matrix(f) for f in dataset.frames]
    return Dataset(frames, list(dataset.class_names), dict(dataset.split), domain="ap")
