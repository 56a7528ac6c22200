"""Streaming per-channel IIR filtering for 32-channel sEMG at 1 kHz.

Butterworth high/low-pass and notch sections are designed here directly
(bilinear transform, prewarped at the cutoff or center frequency) and run
as a cascade of second-order sections in transposed direct form II.

The default acquisition chain is::

    HP 6th order @ 15 Hz -> LP 2nd order @ 375 Hz -> notch 60 -> 120 -> 180 Hz
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DataError, InvalidSpecError, SequencingError

N_CHANNELS = 32
FS_HZ = 1000.0
NOTCH_Q = 35.0
WARMUP_S = 0.5


@dataclass(frozen=True)
class RawFrame:
    t: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise DataError(f"frame samples must be 1-D, got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)


FilteredFrame = RawFrame


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    cutoff_hz: float
    fs_hz: float = FS_HZ
    order: int = 2
    q: float | None = None

    def validate(self):
        if self.kind not in ("highpass", "lowpass", "notch"):
            raise InvalidSpecError(f"unknown filter kind {self.kind!r}")
        if not self.fs_hz > 0:
            raise InvalidSpecError(f"sample rate must be positive, got {self.fs_hz}")
        if not 0 < self.cutoff_hz < self.fs_hz / 2:
            raise InvalidSpecError(
                f"cutoff {self.cutoff_hz} Hz outside (0, Nyquist={self.fs_hz / 2}) Hz"
            )
        if self.kind == "notch":
            if self.q is None or not self.q > 0:
                raise InvalidSpecError("notch needs a positive q")
        elif self.order not in (2, 4, 6):
            raise InvalidSpecError(f"Butterworth order must be 2, 4 or 6, got {self.order}")


@dataclass
class FilterCascade:
    """Ordered biquads ``(b0, b1, b2, a1, a2)`` plus per-channel delay state.

    One instance serves exactly one stream; use :meth:`fresh` to get an
    independent copy with zeroed state for another session.
    """

    sections: np.ndarray
    fs_hz: float = FS_HZ
    n_channels: int = N_CHANNELS
    state: np.ndarray = field(default=None, repr=False)
    last_t: int | None = field(default=None, repr=False)

    def __post_init__(self):
        self.sections = np.ascontiguousarray(np.atleast_2d(self.sections), dtype=float)
        if self.sections.shape[1] != 5:
            raise InvalidSpecError("sections must have 5 coefficients each")
        if self.state is None:
            self.state = np.zeros((self.n_channels, len(self.sections), 2))
        self._out = np.empty(self.n_channels)

    @property
    def n_sections(self) -> int:
        return len(self.sections)

    def fresh(self, n_channels: int | None = None) -> FilterCascade:
        return FilterCascade(self.sections.copy(), self.fs_hz, n_channels or self.n_channels)

    def reset(self):
        self.state[:] = 0.0
        self.last_t = None

    def then(self, other: FilterCascade) -> FilterCascade:
        if other.fs_hz != self.fs_hz:
            raise InvalidSpecError("cannot chain filters designed for different sample rates")
        return FilterCascade(np.vstack([self.sections, other.sections]), self.fs_hz, self.n_channels)

    def is_stable(self) -> bool:
        return all(section_is_stable(s) for s in self.sections)

    def frequency_response(self, freqs_hz) -> np.ndarray:
        """Complex response of the whole cascade at the given frequencies."""
        z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / self.fs_hz)
        h = np.ones_like(z1)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * z1 + b2 * z1**2) / (1 + a1 * z1 + a2 * z1**2)
        return h

    def process_frame(self, frame: RawFrame) -> FilteredFrame:
        if frame.samples.shape != (self.n_channels,):
            raise DataError(
                f"expected {self.n_channels} samples, got {frame.samples.shape[0]}"
            )
        if self.last_t is not None and frame.t <= self.last_t:
            raise SequencingError(f"frame t={frame.t} does not follow t={self.last_t}")
        if not np.all(np.isfinite(frame.samples)):
            raise DataError(f"non-finite sample in frame t={frame.t}")
        _kernels.sos_step(self.sections, self.state, frame.samples, self._out)
        self.last_t = frame.t
        return FilteredFrame(frame.t, self._out.copy())

    def process_block(self, samples: np.ndarray, t0: int | None = None) -> np.ndarray:
        """Filter consecutive frames ``samples[n]`` (ticks ``t0 + n``)."""
        x = np.ascontiguousarray(samples, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_channels:
            raise DataError(f"expected (n, {self.n_channels}) samples, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite sample in block")
        if t0 is None:
            t0 = 0 if self.last_t is None else self.last_t + 1
        if self.last_t is not None and t0 <= self.last_t:
            raise SequencingError(f"block starting at t={t0} does not follow t={self.last_t}")
        out = np.empty_like(x)
        _kernels.sos_block(self.sections, self.state, x, out)
        if len(x):
            self.last_t = t0 + len(x) - 1
        return out


def section_is_stable(section) -> bool:
    # Stability triangle for z^2 + a1 z + a2.
    _, _, _, a1, a2 = section
    return abs(a2) < 1 and abs(a1) < 1 + a2


def design_butterworth(spec: FilterSpec, n_channels: int = N_CHANNELS) -> FilterCascade:
    """Butterworth high- or low-pass as ``order/2`` biquads.

    Each conjugate pole pair of the analog prototype becomes one section;
    prewarping puts the -3 dB point exactly at ``spec.cutoff_hz``.
    """
    spec.validate()
    if spec.kind not in ("highpass", "lowpass"):
        raise InvalidSpecError(f"design_butterworth cannot build a {spec.kind!r} filter")
    k = math.tan(math.pi * spec.cutoff_hz / spec.fs_hz)
    sections = []
    for m in range(spec.order // 2):
        # damping of the m-th pole pair: 2*zeta = 2*sin((2m+1) pi / 2N)
        zeta2 = 2.0 * math.sin((2 * m + 1) * math.pi / (2 * spec.order))
        norm = 1.0 / (1.0 + zeta2 * k + k * k)
        a1 = 2.0 * (k * k - 1.0) * norm
        a2 = (1.0 - zeta2 * k + k * k) * norm
        if spec.kind == "lowpass":
            b0 = k * k * norm
            sections.append((b0, 2 * b0, b0, a1, a2))
        else:
            sections.append((norm, -2 * norm, norm, a1, a2))
    cascade = FilterCascade(np.array(sections), spec.fs_hz, n_channels)
    assert cascade.is_stable()
    return cascade


def design_notch(center_hz: float, q: float = NOTCH_Q, fs_hz: float = FS_HZ,
                 n_channels: int = N_CHANNELS) -> FilterCascade:
    FilterSpec("notch", center_hz, fs_hz, q=q).validate()
    w0 = 2.0 * math.pi * center_hz / fs_hz
    alpha = math.sin(w0) / (2.0 * q)
    norm = 1.0 / (1.0 + alpha)
    c = -2.0 * math.cos(w0) * norm
    section = (norm, c, norm, c, (1.0 - alpha) * norm)
    cascade = FilterCascade(np.array([section]), fs_hz, n_channels)
    assert cascade.is_stable()
    return cascade


def acquisition_cascade(fs_hz: float = FS_HZ, n_channels: int = N_CHANNELS,
                        notch_q: float = NOTCH_Q) -> FilterCascade:
    """HP 15 Hz (6th) -> LP 375 Hz (2nd) -> 60/120/180 Hz notches."""
    cascade = design_butterworth(FilterSpec("highpass", 15.0, fs_hz, order=6), n_channels)
    cascade = cascade.then(design_butterworth(FilterSpec("lowpass", 375.0, fs_hz, order=2)))
    for f0 in (60.0, 120.0, 180.0):
        cascade = cascade.then(design_notch(f0, notch_q, fs_hz))
    return cascade


def warmup_samples(fs_hz: float = FS_HZ) -> int:
    return int(round(WARMUP_S * fs_hz))
