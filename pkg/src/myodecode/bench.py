"""Real-time benchmark for the streaming path (filter + features + decode).

Allocation accounting separates per-call costs from per-frame costs:

* compiled code: numba's runtime counters are read around one ``push_block``
  call on a short block and one on a long block. Crossing into compiled code
  costs a fixed number of runtime objects per call (argument unboxing), so
  any difference between the two counts is per-frame allocation.
* Python side: ``StreamingPipeline.push`` is driven frame by frame under
  tracemalloc and its peak is compared with a loop calling
  ``_kernels.dispatch_probe``, which has the same argument list and does no
  work. Any per-frame ndarray (even a view) costs more than
  ``ALLOC_SLACK_BYTES``. Traced memory retained after the loop must be zero.

Runtime must not depend on the data: the block path is timed on signals of
very different amplitude and the slowest best-of-N time may exceed the
fastest by at most ``TIMING_SPREAD``.
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np
from numba.core.runtime import _nrt_python, rtsys

from . import _kernels
from .kalman import KalmanModel
from .selection import SelectionResult
from .signal_chain import FS_HZ, N_CHANNELS
from .streaming import StreamingPipeline
from .synth import SynthConfig, band_limited_noise

ALLOC_SLACK_BYTES = 64
REALTIME_TARGET = 50.0
TIMING_SPREAD = 1.5
_SHORT_BLOCK = 1000


@dataclass
class BenchResult:
    seconds_of_signal: float
    wall_s: float
    realtime_factor: float
    ticks: int
    nrt_allocs_short: int
    nrt_allocs_long: int
    py_peak_bytes: int
    py_baseline_peak_bytes: int
    py_retained_bytes: int
    timing_by_amplitude: dict

    @property
    def per_frame_nrt_allocs(self) -> int:
        return self.nrt_allocs_long - self.nrt_allocs_short

    @property
    def hot_path_extra_bytes(self) -> int:
        return self.py_peak_bytes - self.py_baseline_peak_bytes

    @property
    def allocation_free(self) -> bool:
        return (self.per_frame_nrt_allocs == 0
                and self.hot_path_extra_bytes <= ALLOC_SLACK_BYTES
                and self.py_retained_bytes <= 0)

    @property
    def timing_spread(self) -> float:
        t = list(self.timing_by_amplitude.values())
        return max(t) / min(t)

    @property
    def passed(self) -> bool:
        return (self.realtime_factor >= REALTIME_TARGET and self.allocation_free
                and self.timing_spread <= TIMING_SPREAD)

    def summary(self) -> str:
        return (f"{self.seconds_of_signal:.0f} s of {N_CHANNELS}-channel EMG in {self.wall_s:.3f} s "
                f"({self.realtime_factor:.1f}x real time, {self.ticks} decoded ticks); "
                f"per-frame compiled allocations {self.per_frame_nrt_allocs} "
                f"(per call {self.nrt_allocs_short}); python peak over dispatch baseline "
                f"{self.hot_path_extra_bytes} B, retained {self.py_retained_bytes} B; "
                f"timing spread across amplitudes {self.timing_spread:.2f}")


def bench_model(D: int = 3, k: int = 48, seed: int = 0) -> tuple[KalmanModel, SelectionResult]:
    """A fixed, well-conditioned decoder of the production shape."""
    rng = np.random.default_rng(seed)
    model = KalmanModel(A=0.99 * np.eye(D), W=1e-3 * np.eye(D), H=rng.normal(size=(k, D)),
                        Q=np.eye(k), P0=1e-3 * np.eye(D))
    order = tuple(int(i) for i in rng.choice(528, size=k, replace=False))
    return model, SelectionResult(order, tuple(np.linspace(0.1, 0.9, k)))


def bench_signal(seconds: float = 60.0, seed: int = 0) -> np.ndarray:
    n = int(seconds * FS_HZ)
    rng = np.random.default_rng(seed)
    return np.ascontiguousarray(SynthConfig().gain_uV * band_limited_noise(n, N_CHANNELS, (15.0, 375.0),
                                                                           FS_HZ, rng))


class _NrtCounter:
    def __enter__(self):
        self._was_on = _nrt_python.memsys_stats_enabled()
        _nrt_python.memsys_enable_stats()
        return self

    def __exit__(self, *exc):
        if not self._was_on:
            _nrt_python.memsys_disable_stats()

    @staticmethod
    def total() -> int:
        s = rtsys.get_allocation_stats()
        return s.alloc + s.mi_alloc


def count_nrt_allocs(fn, *args) -> int:
    """Runtime allocations made while calling ``fn(*args)`` once."""
    with _NrtCounter():
        before = _NrtCounter.total()
        fn(*args)
        return _NrtCounter.total() - before


def nrt_allocs_for_block(pipe: StreamingPipeline, block: np.ndarray) -> int:
    """Runtime allocations made by one ``push_block`` call over ``block``."""
    room = len(block) // 33 + 2
    codes = np.zeros(room, dtype=np.int64)
    feats = np.zeros((room, 0))
    traj = np.zeros((room, pipe.D))
    return count_nrt_allocs(_kernels.push_block, block, *pipe._args(), codes, feats, traj)


def traced_loop_peak(fn, rows) -> tuple[int, int]:
    """(peak over start, retained) traced bytes for calling ``fn(t, row)`` on every row."""
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        start, _ = tracemalloc.get_traced_memory()
        for t, row in rows:
            fn(t, row)
        end, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak - start, end - start


def python_overhead(pipe: StreamingPipeline, rows: list) -> tuple[int, int, int]:
    """Peak bytes of the push loop, of the dispatch-only loop, and bytes retained by push."""
    probe_args = pipe._push_args

    def probe(t, row):
        return _kernels.dispatch_probe(*probe_args)

    push = pipe.push
    t0 = rows[0][0]
    # untraced pass first so one-off caches (dispatch, branch warm-up) are not counted
    for fn in (push, probe):
        pipe.reset()
        fn(t0 - 1, rows[0][1])
        for t, row in rows:
            fn(t, row)
    pipe.reset()
    push(t0 - 1, rows[0][1])
    base_peak, _ = traced_loop_peak(probe, rows)
    hot_peak, retained = traced_loop_peak(push, rows)
    return hot_peak, base_peak, retained


def time_block(model, selection, raw: np.ndarray, repeats: int = 3) -> float:
    best = np.inf
    for _ in range(repeats):
        pipe = StreamingPipeline(model=model, selection=selection)
        t0 = time.perf_counter()
        pipe.run(raw, keep_features=False)
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(seconds: float = 60.0, seed: int = 0) -> BenchResult:
    raw = bench_signal(seconds, seed)
    n = len(raw)
    model, selection = bench_model(seed=seed)

    # compile and warm every branch (warm-up ticks, first outputs)
    warm = StreamingPipeline(model=model, selection=selection)
    warm.run(raw[: 2 * _SHORT_BLOCK])
    for t in range(_SHORT_BLOCK):
        warm.push(2 * _SHORT_BLOCK + t, raw[t])

    # real-time factor on the frame-by-frame path, as a live acquisition would drive it
    pipe = StreamingPipeline(model=model, selection=selection)
    push = pipe.push
    ticks = 0
    t_start = time.perf_counter()
    for t in range(n):
        if push(t, raw[t]) == _kernels.TICK_OUTPUT:
            ticks += 1
    wall = time.perf_counter() - t_start

    # compiled per-frame allocations: fixed per call, so short and long blocks must match
    fresh = StreamingPipeline(model=model, selection=selection)
    fresh.run(raw[: _SHORT_BLOCK])
    short = nrt_allocs_for_block(fresh, raw[_SHORT_BLOCK: 2 * _SHORT_BLOCK])
    long = nrt_allocs_for_block(fresh, raw[2 * _SHORT_BLOCK:])

    rows = [(t, raw[t]) for t in range(_SHORT_BLOCK, n)]
    hot_peak, base_peak, retained = python_overhead(fresh, rows)

    timing = {amp: time_block(model, selection, raw * amp) for amp in (1e-3, 1.0, 1e3)}

    return BenchResult(
        seconds_of_signal=n / FS_HZ,
        wall_s=wall,
        realtime_factor=(n / FS_HZ) / wall,
        ticks=ticks,
        nrt_allocs_short=short,
        nrt_allocs_long=long,
        py_peak_bytes=hot_peak,
        py_baseline_peak_bytes=base_peak,
        py_retained_bytes=retained,
        timing_by_amplitude=timing,
    )


if __name__ == "__main__":
    res = run_benchmark()
    print(res.summary())
    print("PASS" if res.passed else "FAIL")
    raise SystemExit(0 if res.passed else 1)
