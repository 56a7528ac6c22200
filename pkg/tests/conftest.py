import numpy as np
import pytest


def steady_state_gain(cascade, freq_hz, seconds=6.0, settle_s=4.0, n_channels=None):
    """Amplitude ratio of a filtered unit sine after transients have died out.

    The output tail is fitted with a least-squares sine/cosine pair at the
    driving frequency, so the estimate does not depend on sample phase.
    """
    fs = cascade.fs_hz
    n = int(seconds * fs)
    t = np.arange(n) / fs
    x = np.sin(2 * np.pi * freq_hz * t)
    c = n_channels or cascade.n_channels
    y = cascade.fresh(c).process_block(np.repeat(x[:, None], c, axis=1))[:, 0]
    tail = slice(int(settle_s * fs), n)
    basis = np.column_stack([np.sin(2 * np.pi * freq_hz * t[tail]), np.cos(2 * np.pi * freq_hz * t[tail])])
    coef, *_ = np.linalg.lstsq(basis, y[tail], rcond=None)
    return float(np.hypot(*coef))


def db(x):
    return 20 * np.log10(x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
