"""Compiled per-sample kernels for the streaming path.

Every kernel works on caller-owned buffers and allocates nothing, so the
per-frame loop stays allocation free once the buffers exist.
"""

import math

import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True, fastmath=False)

# Layout of the integer state vector used by ``push_sample``.
I_SAMPLE = 0  # index of the next sample to be consumed
I_TICK = 1  # index of the currently open feature tick
I_COUNT = 2  # samples accumulated in the open window
I_WINDOW_START = 3  # first sample index of the open window
I_SEEN = 4  # smoothed frames pushed so far
I_RING = 5  # next ring slot
I_STATUS = 6  # last Kalman status (0 ok, 1 non-PD innovation covariance)
N_ISTATE = 7

TICK_NONE = 0
TICK_WARMUP = 1
TICK_OUTPUT = 2
TICK_FAILED = 3
TICK_BADDATA = 4


@_jit
def sos_step(sections, state, x, out):
    """Run one multichannel sample through a biquad cascade (DF2-transposed)."""
    n_sec = sections.shape[0]
    for c in range(x.shape[0]):
        v = x[c]
        for s in range(n_sec):
            b0 = sections[s, 0]
            b1 = sections[s, 1]
            b2 = sections[s, 2]
            a1 = sections[s, 3]
            a2 = sections[s, 4]
            y = b0 * v + state[c, s, 0]
            state[c, s, 0] = b1 * v - a1 * y + state[c, s, 1]
            state[c, s, 1] = b2 * v - a2 * y
            v = y
        out[c] = v


@_jit
def sos_block(sections, state, x, out):
    for n in range(x.shape[0]):
        sos_step(sections, state, x[n], out[n])


@_jit
def mav_accumulate(y, pair_i, pair_j, acc):
    for f in range(acc.shape[0]):
        j = pair_j[f]
        if j < 0:
            acc[f] += abs(y[pair_i[f]])
        else:
            acc[f] += abs(y[pair_i[f]] - y[j])


@_jit
def cholesky_inplace(S):
    """Lower Cholesky factor written over ``S``; returns False if not PD."""
    n = S.shape[0]
    for j in range(n):
        d = S[j, j]
        for m in range(j):
            d -= S[j, m] * S[j, m]
        if not d > 0.0:
            return False
        d = math.sqrt(d)
        S[j, j] = d
        for i in range(j + 1, n):
            v = S[i, j]
            for m in range(j):
                v -= S[i, m] * S[j, m]
            S[i, j] = v / d
    for j in range(n):
        for i in range(j):
            S[i, j] = 0.0
    return True


@_jit
def kalman_step(A, W, H, Q, x, P, z, xp, Pp, tmp_dd, PHt, S, K, KQ, innov):
    """Predict + update in place. Returns 0 on success, 1 if S is not PD.

    On failure ``x`` and ``P`` hold the prediction (measurement skipped).
    """
    D = A.shape[0]
    k = H.shape[0]

    for i in range(D):
        v = 0.0
        for j in range(D):
            v += A[i, j] * x[j]
        xp[i] = v
    # Pp = A P A^T + W
    for i in range(D):
        for j in range(D):
            v = 0.0
            for m in range(D):
                v += A[i, m] * P[m, j]
            tmp_dd[i, j] = v
    for i in range(D):
        for j in range(D):
            v = W[i, j]
            for m in range(D):
                v += tmp_dd[i, m] * A[j, m]
            Pp[i, j] = v
    # PHt = Pp H^T  (D x k)
    for i in range(D):
        for r in range(k):
            v = 0.0
            for m in range(D):
                v += Pp[i, m] * H[r, m]
            PHt[i, r] = v
    # S = H PHt + Q  (k x k)
    for r in range(k):
        for c in range(k):
            v = Q[r, c]
            for m in range(D):
                v += H[r, m] * PHt[m, c]
            S[r, c] = v
    for r in range(k):
        for c in range(r):
            v = 0.5 * (S[r, c] + S[c, r])
            S[r, c] = v
            S[c, r] = v
    if not cholesky_inplace(S):
        for i in range(D):
            x[i] = xp[i]
            for j in range(D):
                P[i, j] = 0.5 * (Pp[i, j] + Pp[j, i])
        return 1
    # K = PHt S^-1, row by row: S K[d]^T = PHt[d]^T
    for d in range(D):
        for r in range(k):
            v = PHt[d, r]
            for m in range(r):
                v -= S[r, m] * K[d, m]
            K[d, r] = v / S[r, r]
        for r in range(k - 1, -1, -1):
            v = K[d, r]
            for m in range(r + 1, k):
                v -= S[m, r] * K[d, m]
            K[d, r] = v / S[r, r]
    for r in range(k):
        v = z[r]
        for m in range(D):
            v -= H[r, m] * xp[m]
        innov[r] = v
    for i in range(D):
        v = xp[i]
        for r in range(k):
            v += K[i, r] * innov[r]
        x[i] = v
    # Joseph form: P = (I - K H) Pp (I - K H)^T + K Q K^T
    # tmp_dd <- I - K H
    for i in range(D):
        for j in range(D):
            v = 1.0 if i == j else 0.0
            for r in range(k):
                v -= K[i, r] * H[r, j]
            tmp_dd[i, j] = v
    # P <- (I - K H) Pp, then P (I - K H)^T via xp as a row scratch
    for i in range(D):
        for j in range(D):
            v = 0.0
            for m in range(D):
                v += tmp_dd[i, m] * Pp[m, j]
            P[i, j] = v
    for i in range(D):
        for j in range(D):
            v = 0.0
            for m in range(D):
                v += P[i, m] * tmp_dd[j, m]
            xp[j] = v
        for j in range(D):
            P[i, j] = xp[j]
    for i in range(D):
        for c in range(k):
            v = 0.0
            for r in range(k):
                v += K[i, r] * Q[r, c]
            KQ[i, c] = v
    for i in range(D):
        for j in range(D):
            v = 0.0
            for c in range(k):
                v += KQ[i, c] * K[j, c]
            P[i, j] += v
    for i in range(D):
        for j in range(i):
            v = 0.5 * (P[i, j] + P[j, i])
            P[i, j] = v
            P[j, i] = v
    return 0


@_jit
def output_stage(x, deadband, gain, out):
    for d in range(x.shape[0]):
        v = x[d]
        if abs(v) < deadband[d]:
            v = 0.0
        v *= gain[d]
        if v > 1.0:
            v = 1.0
        elif v < -1.0:
            v = -1.0
        out[d] = v


@_jit
def push_sample(
    raw, istate, fs_num, rate_num, warmup_samples,
    sections, fstate, ybuf,
    pair_i, pair_j, acc, mav,
    ring, smoothed,
    baseline, selection, zsel,
    A, W, H, Q, x, P,
    xp, Pp, tmp_dd, PHt, S, K, KQ, innov,
    deadband, gain, out,
):
    """Consume one raw frame. Returns one of the TICK_* codes.

    ``fs_num / rate_num`` is the exact samples-per-tick ratio; tick ``k``
    closes after sample ``floor((k + 1) * fs_num / rate_num) - 1``.
    Decoding is skipped when ``A`` has zero rows. A non-finite frame is
    rejected before any state changes.
    """
    for c in range(raw.shape[0]):
        if not math.isfinite(raw[c]):
            return TICK_BADDATA
    sos_step(sections, fstate, raw, ybuf)
    mav_accumulate(ybuf, pair_i, pair_j, acc)
    istate[I_COUNT] += 1
    sample = istate[I_SAMPLE]
    istate[I_SAMPLE] = sample + 1
    tick = istate[I_TICK]
    boundary = ((tick + 1) * fs_num) // rate_num
    if sample + 1 < boundary:
        return TICK_NONE

    n = istate[I_COUNT]
    for f in range(acc.shape[0]):
        mav[f] = acc[f] / n
        acc[f] = 0.0
    start = istate[I_WINDOW_START]
    istate[I_TICK] = tick + 1
    istate[I_COUNT] = 0
    istate[I_WINDOW_START] = sample + 1
    if start < warmup_samples:
        return TICK_WARMUP

    width = ring.shape[0]
    slot = istate[I_RING]
    for f in range(mav.shape[0]):
        ring[slot, f] = mav[f]
    istate[I_RING] = (slot + 1) % width
    seen = istate[I_SEEN] + 1
    istate[I_SEEN] = seen
    filled = seen if seen < width else width
    for f in range(mav.shape[0]):
        v = 0.0
        for r in range(filled):
            v += ring[r, f]
        smoothed[f] = v / filled - baseline[f]

    if A.shape[0] == 0:
        return TICK_OUTPUT
    for r in range(selection.shape[0]):
        zsel[r] = smoothed[selection[r]]
    status = kalman_step(A, W, H, Q, x, P, zsel, xp, Pp, tmp_dd, PHt, S, K, KQ, innov)
    istate[I_STATUS] = status
    output_stage(x, deadband, gain, out)
    if status != 0:
        return TICK_FAILED
    return TICK_OUTPUT


@_jit
def push_block(
    raws, istate, fs_num, rate_num, warmup_samples,
    sections, fstate, ybuf,
    pair_i, pair_j, acc, mav,
    ring, smoothed,
    baseline, selection, zsel,
    A, W, H, Q, x, P,
    xp, Pp, tmp_dd, PHt, S, K, KQ, innov,
    deadband, gain, out,
    tick_codes, feat_out, traj_out,
):
    """Push a block of frames; per-tick results go to the ``*_out`` rows.

    ``feat_out`` / ``traj_out`` may have zero columns to skip copying.
    Returns the number of ticks closed.
    """
    n_ticks = 0
    for n in range(raws.shape[0]):
        code = push_sample(
            raws[n], istate, fs_num, rate_num, warmup_samples,
            sections, fstate, ybuf,
            pair_i, pair_j, acc, mav,
            ring, smoothed,
            baseline, selection, zsel,
            A, W, H, Q, x, P,
            xp, Pp, tmp_dd, PHt, S, K, KQ, innov,
            deadband, gain, out,
        )
        if code == TICK_NONE:
            continue
        tick_codes[n_ticks] = code
        if code != TICK_WARMUP:
            for f in range(feat_out.shape[1]):
                feat_out[n_ticks, f] = smoothed[f]
        for d in range(traj_out.shape[1]):
            traj_out[n_ticks, d] = out[d]
        n_ticks += 1
    return n_ticks


@_jit
def dispatch_probe(
    raw, istate, fs_num, rate_num, warmup_samples,
    sections, fstate, ybuf,
    pair_i, pair_j, acc, mav,
    ring, smoothed,
    baseline, selection, zsel,
    A, W, H, Q, x, P,
    xp, Pp, tmp_dd, PHt, S, K, KQ, innov,
    deadband, gain, out,
):
    """Same signature as ``push_sample``, no work. Measures the fixed cost of
    crossing from Python into compiled code with this argument list."""
    return TICK_NONE


def empty_2d():
    return np.zeros((0, 0))
