"""Frame-by-frame pipeline: filters -> MAV bank -> boxcar -> baseline -> decoder.

All buffers are allocated when the pipeline is built. ``push`` runs one
compiled kernel per raw frame and touches only those buffers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError, NumericalError, SequencingError
from .features import BOXCAR_FRAMES, FEATURE_RATE_HZ, enumerate_features, n_ticks, samples_per_tick
from .kalman import KalmanModel, OutputStage
from .selection import SelectionResult
from .signal_chain import FS_HZ, N_CHANNELS, FilterCascade, acquisition_cascade, warmup_samples


@dataclass
class StreamResult:
    """Per-tick outputs of a block run.

    ``valid[k]`` is False for warm-up ticks, which carry no features and
    leave the decoder at its initial rest estimate.
    """

    k: np.ndarray
    valid: np.ndarray
    features: np.ndarray
    trajectory: np.ndarray


class StreamingPipeline:
    """One session's streaming state.

    Without ``model`` the pipeline stops after baseline subtraction and
    only emits smoothed features (used for offline training extraction).
    """

    def __init__(
        self,
        cascade: FilterCascade | None = None,
        *,
        n_channels: int = N_CHANNELS,
        fs_hz: float = FS_HZ,
        feature_rate_hz: float = FEATURE_RATE_HZ,
        boxcar_frames: int = BOXCAR_FRAMES,
        baseline: np.ndarray | None = None,
        selection: SelectionResult | None = None,
        model: KalmanModel | None = None,
        output: OutputStage | None = None,
        warmup: int | None = None,
    ):
        cascade = cascade if cascade is not None else acquisition_cascade(fs_hz, n_channels)
        self.n_channels = n_channels
        self.fs_hz = fs_hz
        self.feature_rate_hz = feature_rate_hz
        self.sections = np.ascontiguousarray(cascade.sections)
        self.fstate = np.zeros((n_channels, len(self.sections), 2))
        self.ybuf = np.zeros(n_channels)

        fmap = enumerate_features(n_channels)
        self.n_features = len(fmap)
        self.pair_i, self.pair_j = fmap.pair_arrays()
        self.acc = np.zeros(self.n_features)
        self.mav = np.zeros(self.n_features)
        self.ring = np.zeros((boxcar_frames, self.n_features))
        self.smoothed = np.zeros(self.n_features)
        self.baseline = np.zeros(self.n_features) if baseline is None else np.array(baseline, dtype=float)

        ratio = samples_per_tick(fs_hz, feature_rate_hz)
        self.fs_num, self.rate_num = ratio.numerator, ratio.denominator
        self.warmup = warmup_samples(fs_hz) if warmup is None else int(warmup)
        self.istate = np.zeros(_kernels.N_ISTATE, dtype=np.int64)
        self.last_t: int | None = None

        if model is not None:
            if selection is None or len(selection) != model.k:
                raise DataError("a decoding pipeline needs a selection matching the model inputs")
            D, k = model.D, model.k
            self.selection = selection.indices
            if len(self.selection) and self.selection.max() >= self.n_features:
                raise DataError("selection indices exceed the feature count")
            self.A, self.W = np.array(model.A), np.array(model.W)
            self.H, self.Q = np.array(model.H), np.array(model.Q)
            self.x = np.zeros(D)
            self.P = np.array(model.P0)
            self._P0 = np.array(model.P0)
        else:
            D, k = 0, 0
            self.selection = np.zeros(0, dtype=np.int64)
            self.A = self.W = self.P = self._P0 = np.zeros((0, 0))
            self.H = self.Q = np.zeros((0, 0))
            self.x = np.zeros(0)
        self.D = D
        self.zsel = np.zeros(k)
        self.xp = np.zeros(D)
        self.Pp = np.zeros((D, D))
        self.tmp_dd = np.zeros((D, D))
        self.PHt = np.zeros((D, k))
        self.S = np.zeros((k, k))
        self.K = np.zeros((D, k))
        self.KQ = np.zeros((D, k))
        self.innov = np.zeros(k)
        self.deadband, self.gain = (output or OutputStage()).arrays(D)
        self.output = np.zeros(D)
        self.inbuf = np.zeros(n_channels)
        self._push_args = (self.inbuf,) + self._args()

    # -- state -------------------------------------------------------------

    @property
    def tick(self) -> int:
        """Number of feature ticks closed so far."""
        return int(self.istate[_kernels.I_TICK])

    def reset(self):
        for buf in (self.fstate, self.acc, self.ring, self.smoothed, self.x, self.output):
            buf[:] = 0.0
        self.P[:] = self._P0
        self.istate[:] = 0
        self.last_t = None

    def _args(self):
        return (
            self.istate, self.fs_num, self.rate_num, self.warmup,
            self.sections, self.fstate, self.ybuf,
            self.pair_i, self.pair_j, self.acc, self.mav,
            self.ring, self.smoothed,
            self.baseline, self.selection, self.zsel,
            self.A, self.W, self.H, self.Q, self.x, self.P,
            self.xp, self.Pp, self.tmp_dd, self.PHt, self.S, self.K, self.KQ, self.innov,
            self.deadband, self.gain, self.output,
        )

    # -- hot path ----------------------------------------------------------

    def push(self, t: int, samples: np.ndarray) -> int:
        """Consume one frame; returns a ``TICK_*`` code from ``_kernels``.

        ``samples`` is copied into a fixed input buffer. On ``TICK_OUTPUT``
        the clamped estimate is in ``self.output`` and the smoothed,
        baseline-subtracted features in ``self.smoothed``.
        """
        if self.last_t is not None and t <= self.last_t:
            raise SequencingError(f"frame t={t} does not follow t={self.last_t}")
        if samples.shape[0] != self.n_channels:
            raise DataError(f"expected {self.n_channels} samples, got {samples.shape[0]}")
        np.copyto(self.inbuf, samples)
        code = _kernels.push_sample(*self._push_args)
        if code == _kernels.TICK_BADDATA:
            raise DataError(f"non-finite sample in frame t={t}")
        self.last_t = t
        return code

    # -- block path --------------------------------------------------------

    def run(self, samples: np.ndarray, t0: int | None = None,
            keep_features: bool = True) -> StreamResult:
        x = np.ascontiguousarray(samples, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_channels:
            raise DataError(f"expected (n, {self.n_channels}) samples, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite sample in block")
        if t0 is None:
            t0 = 0 if self.last_t is None else self.last_t + 1
        if self.last_t is not None and t0 <= self.last_t:
            raise SequencingError(f"block starting at t={t0} does not follow t={self.last_t}")
        first_tick = self.tick
        consumed = int(self.istate[_kernels.I_SAMPLE])
        room = n_ticks(consumed + len(x), self.fs_hz, self.feature_rate_hz) - first_tick
        codes = np.zeros(room, dtype=np.int64)
        feats = np.full((room, self.n_features if keep_features else 0), np.nan)
        traj = np.zeros((room, self.D))
        n = _kernels.push_block(x, *self._args(), codes, feats, traj)
        if n != room:
            raise AssertionError(f"tick accounting mismatch: {n} != {room}")
        if len(x):
            self.last_t = t0 + len(x) - 1
        if np.any(codes == _kernels.TICK_FAILED):
            bad = int(np.argmax(codes == _kernels.TICK_FAILED)) + first_tick
            raise NumericalError(f"innovation covariance not positive definite at tick {bad}")
        return StreamResult(
            k=np.arange(first_tick, first_tick + n),
            valid=codes != _kernels.TICK_WARMUP,
            features=feats,
            trajectory=traj,
        )


def extract_features(samples: np.ndarray, **kwargs) -> StreamResult:
    """Smoothed (not baseline-subtracted) features for a whole recording."""
    return StreamingPipeline(n_channels=samples.shape[1], **kwargs).run(samples)
