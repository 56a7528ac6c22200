"""Synthetic sEMG oracle: amplitude-modulated band-limited noise driven by kinematics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft

from .errors import InvalidArgumentError
from .features import FEATURE_RATE_HZ, tick_boundary
from .signal_chain import FS_HZ, N_CHANNELS

CROSSTALK = 0.2


def default_mixing(dof_count: int, n_channels: int = N_CHANNELS) -> np.ndarray:
    """Block-sparse channels x (2 * dof_count) mixing.

    Each directional activation drives its own block of up to 4 channels
    (fewer when 4 per activation would not fit) and leaks 20% into the
    channel on either side of the block.
    """
    n_act = 2 * dof_count
    per = min(4, n_channels // n_act)
    if per < 1:
        raise InvalidArgumentError(f"{n_channels} channels cannot host {n_act} activations")
    mixing = np.zeros((n_channels, n_act))
    for a in range(n_act):
        block = range(a * per, (a + 1) * per)
        mixing[list(block), a] = 1.0
        mixing[(block.start - 1) % n_channels, a] += CROSSTALK
        mixing[block.stop % n_channels, a] += CROSSTALK
    return mixing


@dataclass(frozen=True)
class SynthConfig:
    baseline_uV: float = 5.0
    gain_uV: float = 50.0
    noise_band_hz: tuple = (15.0, 375.0)
    seed: int = 0
    n_channels: int = N_CHANNELS
    fs_hz: float = FS_HZ
    mixing: np.ndarray | None = None

    def validate(self, dof_count: int):
        if self.baseline_uV < 0 or not self.gain_uV > 0:
            raise InvalidArgumentError("need baseline_uV >= 0 and gain_uV > 0")
        lo, hi = self.noise_band_hz
        if not 0 < lo < hi < self.fs_hz / 2:
            raise InvalidArgumentError(f"noise band {self.noise_band_hz} outside (0, Nyquist)")
        m = self.mixing_for(dof_count)
        if m.shape != (self.n_channels, 2 * dof_count):
            raise InvalidArgumentError(
                f"mixing must be {self.n_channels} x {2 * dof_count}, got {m.shape}"
            )
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise InvalidArgumentError("mixing must be finite and nonnegative")

    def mixing_for(self, dof_count: int) -> np.ndarray:
        if self.mixing is None:
            return default_mixing(dof_count, self.n_channels)
        return np.asarray(self.mixing, dtype=float)

    def with_seed(self, seed: int) -> SynthConfig:
        return SynthConfig(self.baseline_uV, self.gain_uV, tuple(self.noise_band_hz), seed,
                           self.n_channels, self.fs_hz, self.mixing)

    def digest(self, dof_count: int) -> str:
        """Stable hash of every field that shapes the generated signal."""
        d = asdict(self)
        d["mixing"] = self.mixing_for(dof_count).round(12).tolist()
        d["noise_band_hz"] = list(self.noise_band_hz)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def n_samples_for(n_frames: int, fs_hz: float = FS_HZ, rate_hz: float = FEATURE_RATE_HZ) -> int:
    return tick_boundary(n_frames - 1, fs_hz, rate_hz) if n_frames else 0


def band_limited_noise(n_samples: int, n_channels: int, band_hz, fs_hz: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Unit-variance Gaussian noise with an ideal brick-wall spectrum on ``band_hz``."""
    white = rng.standard_normal((n_samples, n_channels))
    spec = fft.rfft(white, axis=0)
    freqs = fft.rfftfreq(n_samples, 1.0 / fs_hz)
    keep = (freqs >= band_hz[0]) & (freqs <= band_hz[1]) & (freqs > 0) & (freqs < fs_hz / 2)
    spec[~keep] = 0.0
    noise = fft.irfft(spec, n=n_samples, axis=0)
    # E[sum y^2] = 2 * kept / N per sample for interior bins
    return noise * np.sqrt(n_samples / (2.0 * max(int(keep.sum()), 1)))


def activations(kinematics: np.ndarray) -> np.ndarray:
    """Directional activations ``[max(x, 0), max(-x, 0)]`` (T x 2D)."""
    return np.hstack([np.maximum(kinematics, 0.0), np.maximum(-kinematics, 0.0)])


def envelope(kinematics: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    """Per-frame channel envelopes in µV (T x channels)."""
    kinematics = np.atleast_2d(np.asarray(kinematics, dtype=float))
    mixing = cfg.mixing_for(kinematics.shape[1])
    return cfg.baseline_uV + cfg.gain_uV * activations(kinematics) @ mixing.T


def synth_emg(kinematics, cfg: SynthConfig, rate_hz: float = FEATURE_RATE_HZ) -> np.ndarray:
    """Raw 1 kHz EMG (samples x channels) for a 30 Hz kinematic trajectory.

    Frame ``k`` of the kinematics is held over exactly the samples of
    feature window ``k``, so features and kinematics line up tick for tick.
    """
    kinematics = np.asarray(kinematics, dtype=float)
    if kinematics.ndim == 1:
        kinematics = kinematics[:, None]
    dof_count = kinematics.shape[1]
    cfg.validate(dof_count)
    n_frames = len(kinematics)
    n = n_samples_for(n_frames, cfg.fs_hz, rate_hz)
    bounds = np.array([tick_boundary(k, cfg.fs_hz, rate_hz) for k in range(n_frames)])
    lengths = np.diff(np.concatenate([[0], bounds]))
    env = np.repeat(envelope(kinematics, cfg), lengths, axis=0)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    return env * band_limited_noise(n, cfg.n_channels, cfg.noise_band_hz, cfg.fs_hz, rng)
