import numpy as np
import pytest
from numba import njit

from myodecode import bench
from myodecode.streaming import StreamingPipeline


@njit(cache=False)
def _allocating_loop(x, out):
    for i in range(x.shape[0]):
        row = x[i].copy()
        out[0] += row.sum()
    return out[0]


@njit(cache=False)
def _clean_loop(x, out):
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            out[0] += x[i, j]
    return out[0]


class CopyingPipeline(StreamingPipeline):
    def push(self, t, samples):
        return super().push(t, samples.copy())


@pytest.fixture(scope="module")
def primed():
    model, selection = bench.bench_model()
    raw = bench.bench_signal(3.0)
    return model, selection, raw


def test_nrt_counter_detects_per_frame_allocation():
    x = np.ones((2000, 32))
    out = np.zeros(1)
    for fn in (_allocating_loop, _clean_loop):
        fn(x[:2], out)
    leak_short = bench.count_nrt_allocs(_allocating_loop, x[:100], out)
    leak_long = bench.count_nrt_allocs(_allocating_loop, x, out)
    assert leak_long - leak_short >= 1900
    clean_short = bench.count_nrt_allocs(_clean_loop, x[:100], out)
    clean_long = bench.count_nrt_allocs(_clean_loop, x, out)
    assert clean_long == clean_short


def test_push_block_allocation_is_per_call_only(primed):
    model, selection, raw = primed
    pipe = StreamingPipeline(model=model, selection=selection)
    pipe.run(raw[:1000])
    short = bench.nrt_allocs_for_block(pipe, raw[1000:1100])
    long = bench.nrt_allocs_for_block(pipe, raw[1100:])
    assert long == short


def test_python_overhead_flags_copying_push(primed):
    model, selection, raw = primed
    rows = [(t, raw[t]) for t in range(1000, len(raw))]
    clean = StreamingPipeline(model=model, selection=selection)
    clean.run(raw[:1000])
    hot, base, retained = bench.python_overhead(clean, rows)
    assert hot - base <= bench.ALLOC_SLACK_BYTES and retained <= 0
    leaky = CopyingPipeline(model=model, selection=selection)
    leaky.run(raw[:1000])
    hot, base, _ = bench.python_overhead(leaky, rows)
    assert hot - base > bench.ALLOC_SLACK_BYTES


def test_short_benchmark_passes():
    res = bench.run_benchmark(seconds=10.0)
    assert res.ticks == 300 - 15
    assert res.allocation_free, res.summary()
    assert res.timing_spread <= bench.TIMING_SPREAD, res.summary()
    assert res.realtime_factor >= bench.REALTIME_TARGET, res.summary()
    assert "real time" in res.summary()
