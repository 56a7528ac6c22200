"""Mean-absolute-value feature bank over single-ended and differential channels."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from .errors import InvalidArgumentError, SequencingError

FEATURE_RATE_HZ = 30.0
BOXCAR_FRAMES = 9  # ~300 ms at 30 Hz


class SingleEnded(NamedTuple):
    i: int


class Differential(NamedTuple):
    i: int
    j: int


@dataclass(frozen=True)
class FeatureIndexMap:
    """Canonical ordering: SE(0..n-1), then Diff(i, j) for i < j lexicographically."""

    n_channels: int
    entries: tuple

    def __len__(self):
        return len(self.entries)

    def index_of(self, descriptor) -> int:
        n = self.n_channels
        if isinstance(descriptor, Differential):
            i, j = descriptor
            if not 0 <= i < j < n:
                raise InvalidArgumentError(f"invalid differential pair {descriptor}")
            # pairs before row i: sum_{r<i} (n - 1 - r)
            return n + i * (2 * n - i - 1) // 2 + (j - i - 1)
        (i,) = descriptor
        if not 0 <= i < n:
            raise InvalidArgumentError(f"invalid channel {i}")
        return i

    def pair_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(pair_i, pair_j)`` index arrays; ``pair_j == -1`` marks single-ended."""
        pi = np.array([e[0] for e in self.entries], dtype=np.int64)
        pj = np.array([e.j if isinstance(e, Differential) else -1 for e in self.entries],
                      dtype=np.int64)
        return pi, pj


def enumerate_features(n_channels: int) -> FeatureIndexMap:
    if n_channels < 1:
        raise InvalidArgumentError(f"need at least one channel, got {n_channels}")
    entries = [SingleEnded(i) for i in range(n_channels)]
    entries += [Differential(i, j) for i in range(n_channels) for j in range(i + 1, n_channels)]
    return FeatureIndexMap(n_channels, tuple(entries))


@dataclass(frozen=True)
class FeatureFrame:
    k: int
    values: np.ndarray


def compute_mav(window: np.ndarray, fmap: FeatureIndexMap) -> np.ndarray:
    """MAV of every feature over ``window`` (samples x channels)."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] == 0:
        raise SequencingError("MAV window is empty")
    if window.shape[1] != fmap.n_channels:
        raise InvalidArgumentError(
            f"window has {window.shape[1]} channels, map expects {fmap.n_channels}"
        )
    n = fmap.n_channels
    iu, ju = np.triu_indices(n, k=1)
    single = np.mean(np.abs(window), axis=0)
    diff = np.mean(np.abs(window[:, iu] - window[:, ju]), axis=0)
    return np.concatenate([single, diff])


def samples_per_tick(fs_hz: float, feature_rate_hz: float) -> Fraction:
    return Fraction(fs_hz).limit_denominator(10**6) / Fraction(feature_rate_hz).limit_denominator(10**6)


def tick_boundary(k: int, fs_hz: float = 1000.0, feature_rate_hz: float = FEATURE_RATE_HZ) -> int:
    """Exclusive end sample of window ``k``: floor((k + 1) * fs / rate)."""
    ratio = samples_per_tick(fs_hz, feature_rate_hz)
    return ((k + 1) * ratio.numerator) // ratio.denominator


def tick_scheduler(fs_hz: float = 1000.0, feature_rate_hz: float = FEATURE_RATE_HZ,
                   n_samples: int | None = None) -> Iterator[tuple[int, int]]:
    """Yield ``(start, stop)`` sample ranges of consecutive feature windows.

    Windows partition the sample axis with no gap or overlap. With
    ``n_samples`` the iteration stops at the last complete window.
    """
    ratio = samples_per_tick(fs_hz, feature_rate_hz)
    start, k = 0, 0
    while True:
        stop = ((k + 1) * ratio.numerator) // ratio.denominator
        if n_samples is not None and stop > n_samples:
            return
        yield start, stop
        start, k = stop, k + 1


def n_ticks(n_samples: int, fs_hz: float = 1000.0, feature_rate_hz: float = FEATURE_RATE_HZ) -> int:
    ratio = samples_per_tick(fs_hz, feature_rate_hz)
    # largest K with floor(K * r) <= n_samples
    return ((n_samples + 1) * ratio.denominator - 1) // ratio.numerator


class BoxcarSmoother:
    """Causal moving average over the last ``width`` frames.

    Before ``width`` frames have arrived the mean covers what has been seen.
    """

    def __init__(self, width: int = BOXCAR_FRAMES):
        if width < 1:
            raise InvalidArgumentError("boxcar width must be >= 1")
        self.width = width
        self._frames = deque(maxlen=width)

    def push(self, frame: FeatureFrame) -> FeatureFrame:
        self._frames.append(np.asarray(frame.values, dtype=float))
        return FeatureFrame(frame.k, np.mean(self._frames, axis=0))


def smooth_boxcar(frames, width: int = BOXCAR_FRAMES) -> list[FeatureFrame]:
    smoother = BoxcarSmoother(width)
    return [smoother.push(f) for f in frames]


@dataclass(frozen=True)
class BaselineProfile:
    means: np.ndarray
    n_frames: int


def estimate_baseline(rest_frames) -> BaselineProfile:
    values = [f.values if isinstance(f, FeatureFrame) else f for f in rest_frames]
    if len(values) == 0:
        raise InvalidArgumentError("baseline needs at least one rest frame")
    stacked = np.asarray(values, dtype=float)
    # shifted mean: exact when every rest frame is identical
    ref = stacked[0]
    return BaselineProfile(ref + (stacked - ref).mean(axis=0), len(values))


def subtract_baseline(frame: FeatureFrame, profile: BaselineProfile) -> FeatureFrame:
    return FeatureFrame(frame.k, np.asarray(frame.values, dtype=float) - profile.means)
