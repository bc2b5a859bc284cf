"""Core time-series containers and sliding-window extraction.

Everything downstream (generation, training, evaluation) works in terms of
these three types: a single uniformly sampled signal, a labeled group of
signals, and a fixed-length window cut from such a group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_FRAME_RATE_HZ = 30.0


def _as_readonly_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled real-valued signal.

    Args:
        values: sample values; must be non-empty and finite.
        frame_rate_hz: sampling rate, defaults to 30 Hz (one frame per
            video frame at standard rate).
    """

    values: np.ndarray
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly_f64(self.values))
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("TimeSeries requires a non-empty 1-D value sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("TimeSeries values must be finite")
        if not (self.frame_rate_hz > 0):
            raise ValueError("frame_rate_hz must be positive")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class InteractionSample:
    """A group of participants, each contributing equally long channels.

    ``participants`` is a list of channel-sets; channel-set ``k`` holds the
    C channels of participant ``k``. All K*C channels must agree in length
    and frame rate. ``label`` is the scalar synchrony score for the whole
    group (annotated score for real data, prescribed cross-covariance for
    synthetic data).
    """

    participants: tuple[tuple[TimeSeries, ...], ...]
    label: float
    group_id: str

    def __post_init__(self):
        parts = tuple(tuple(cs) for cs in self.participants)
        object.__setattr__(self, "participants", parts)
        if len(parts) < 2:
            raise ValueError("need at least 2 participants")
        n_channels = {len(cs) for cs in parts}
        if n_channels == {0} or len(n_channels) != 1:
            raise ValueError("all participants must share the same non-zero channel count")
        lengths = {len(ts) for cs in parts for ts in cs}
        rates = {ts.frame_rate_hz for cs in parts for ts in cs}
        if len(lengths) != 1:
            raise ValueError("all channels must share one length")
        if len(rates) != 1:
            raise ValueError("all channels must share one frame rate")
        if not np.isfinite(self.label):
            raise ValueError("label must be finite")

    @property
    def n_participants(self) -> int:
        return len(self.participants)

    @property
    def n_channels(self) -> int:
        return len(self.participants[0])

    @property
    def n_frames(self) -> int:
        return len(self.participants[0][0])

    def as_array(self) -> np.ndarray:
        """Stack all channels into a (K, C, T) array."""
        return np.stack(
            [np.stack([ts.values for ts in cs]) for cs in self.participants]
        )


@dataclass(frozen=True)
class Window:
    """A fixed-length slice of an InteractionSample.

    ``data`` has shape (K, C, W) and carries the parent sample's label.
    """

    start_frame: int
    data: np.ndarray
    label: float
    group_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError("window data must be a (K, C, W) array")
        object.__setattr__(self, "data", arr)

    @property
    def length(self) -> int:
        return self.data.shape[2]


def window_count(n_frames: int, window_length: int, stride: int) -> int:
    """Number of windows of ``window_length`` at ``stride`` over ``n_frames``."""
    if window_length > n_frames:
        return 0
    return (n_frames - window_length) // stride + 1


def extract_windows(
    sample: InteractionSample, window_length: int, stride: int = 1
) -> list[Window]:
    """Slice a sample into overlapping windows.

    Window i starts at frame ``i * stride``; every window inherits the
    sample's label. Raises if the window does not fit or the stride is not
    positive.
    """
    if stride <= 0:
        raise ValueError("stride must be positive")
    if window_length <= 0:
        raise ValueError("window_length must be positive")
    if window_length > sample.n_frames:
        raise ValueError(
            f"window exceeds signal: window_length {window_length} > {sample.n_frames} frames"
        )
    cube = sample.as_array()
    out = []
    for i in range(window_count(sample.n_frames, window_length, stride)):
        start = i * stride
        out.append(
            Window(
                start_frame=start,
                data=cube[:, :, start : start + window_length],
                label=sample.label,
                group_id=sample.group_id,
            )
        )
    return out


def zscore_normalize(series: TimeSeries) -> TimeSeries:
    """Shift/scale a series to mean 0, population std 1.

    A constant series maps to all zeros rather than raising.
    """
    mu = float(np.mean(series.values))
    sd = float(np.std(series.values))
    if sd == 0.0:
        vals = np.zeros_like(series.values)
    else:
        vals = (series.values - mu) / sd
    return TimeSeries(vals, frame_rate_hz=series.frame_rate_hz)


def normalize_sample(sample: InteractionSample) -> InteractionSample:
    """Apply per-channel z-score normalization over the full signal."""
    parts = tuple(
        tuple(zscore_normalize(ts) for ts in cs) for cs in sample.participants
    )
    return InteractionSample(parts, label=sample.label, group_id=sample.group_id)
