"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Lines go straight to the terminal (capture disabled) so they appear in any
pytest run, with or without ``-s``.
"""

import time

import numpy as np
import pytest

from myodecode import bench
from myodecode.analysis import band_torque, bbt_score, holm_bonferroni, paired_ttest, tukey_outliers
from myodecode.features import Differential, SingleEnded, enumerate_features
from myodecode.kalman import DecodeState, decode_step, train_kalman
from myodecode.protocol import abba_schedule, build_target_set, build_training_set
from myodecode.selection import gram_schmidt_select
from myodecode.session import CONTROL_RATIO, RMSE_THRESHOLD, simulate_session
from myodecode.signal_chain import acquisition_cascade

from conftest import db, steady_state_gain
from test_analysis import t_two_sided_p
from test_kalman import _fuzz, random_model, riccati_fixed_point
from test_selection import brute_force_greedy, planted_instance
from test_signal_chain import chain_mag


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {n} failed: {detail}"
    return emit


def test_criterion_1_feature_count(report):
    enumerate_features(32)
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        fmap = enumerate_features(32)
        best = min(best, time.perf_counter() - t0)
    canonical = [SingleEnded(i) for i in range(32)]
    canonical += [Differential(i, j) for i in range(32) for j in range(i + 1, 32)]
    ok = len(fmap) == 528 == 32 + 32 * 31 // 2 and list(fmap.entries) == canonical and best < 1e-3
    report(1, "32 channels give 528 features in canonical order", ok,
           f"{len(fmap)} features, {best * 1e6:.0f} us")


def test_criterion_2_filter_chain(report):
    t0 = time.perf_counter()
    worst_pass = 0.0
    for f in (10.0, 15.0, 100.0, 375.0):
        g = db(steady_state_gain(acquisition_cascade(n_channels=1), f))
        worst_pass = max(worst_pass, abs(g - db(chain_mag(f))))
    worst_notch = -np.inf
    analytic_notch = 0.0
    for f in (60.0, 120.0, 180.0):
        chain = acquisition_cascade(n_channels=1)
        worst_notch = max(worst_notch, db(steady_state_gain(chain, f, seconds=8.0, settle_s=5.0)))
        analytic_notch = max(analytic_notch, float(np.abs(chain.frequency_response([f]))[0]))
    stable = acquisition_cascade().is_stable()
    elapsed = time.perf_counter() - t0
    ok = worst_pass <= 0.5 and worst_notch <= -30.0 and analytic_notch < 1e-9 and stable and elapsed < 5.0
    report(2, "filter gains, mains attenuation, stability", ok,
           f"max passband error {worst_pass:.3f} dB, notch gain <= {worst_notch:.1f} dB, {elapsed:.2f} s")


def test_criterion_3_protocol_arithmetic(report):
    p3, p6 = build_training_set(3), build_training_set(6)
    targets = build_target_set()
    cats = [t.category for t in targets]
    abba = abba_schedule("banded").conditions
    ok = (
        p3.meta["trial_duration_s"] == 6.4 and p3.meta["trial_frames"] == 192
        and p3.meta["trials_per_direction"] == 5
        and p6.meta["trial_duration_s"] == 4.4 and p6.meta["trials_per_direction"] == 4
        and len(targets) == 9 and cats.count("digit_only") == 3 and cats.count("digit_wrist") == 6
        and all(level == 0.5 for t in targets for _, level in t.movements)
        and abba == abba[::-1] and abba[0] != abba[1]
    )
    report(3, "protocol arithmetic", ok, f"3-DOF {p3.meta['trial_duration_s']} s, 6-DOF "
           f"{p6.meta['trial_duration_s']} s, {len(targets)} targets, {'-'.join(abba)}")


def test_criterion_4_end_to_end(report):
    t0 = time.perf_counter()
    rec = simulate_session(3, seed=0, negative_control=True)
    elapsed = time.perf_counter() - t0
    per_dof = rec.per_dof_rmse
    aligned = rec.mean_rmse
    control = float(np.mean([t.rmse for t in rec.control.per_trial]))
    ok = (np.all(per_dof <= RMSE_THRESHOLD) and control >= CONTROL_RATIO * aligned and elapsed <= 60.0
          and rec.manifest["rmse_threshold"] == RMSE_THRESHOLD)
    report(4, "3-DOF simulated session decode and shuffled control", ok,
           f"per-DOF RMSE {np.array2string(per_dof, precision=3)}, control/aligned "
           f"{control / aligned:.1f}, {elapsed:.1f} s")


def test_criterion_5_selection(report):
    t0 = time.perf_counter()
    recovered = 0
    for seed in range(100):
        X, Y, informative = planted_instance(seed, noise=0.1)
        recovered += set(gram_schmidt_select(X, Y, 3).order) == informative
    oracle_ok = 0
    for seed in range(30):
        r = np.random.default_rng(5000 + seed)
        T, F = int(r.integers(40, 120)), int(r.integers(3, 21))
        X = r.normal(size=(T, F)) * r.uniform(0.1, 10, size=F)
        m = min(3, F)
        Y = X[:, :m] @ r.normal(size=(m, 2)) + r.normal(size=(T, 2))
        k = int(r.integers(1, F + 1))
        oracle_ok += list(gram_schmidt_select(X, Y, k).order) == brute_force_greedy(X, Y, k)
    scale_ok = 0
    for seed in range(20):
        r = np.random.default_rng(9000 + seed)
        X = r.normal(size=(120, 12))
        Y = X[:, :4] @ r.normal(size=(4, 2)) + r.normal(size=(120, 2))
        scaled = X * 10.0 ** r.uniform(-3, 3, size=12)
        scale_ok += gram_schmidt_select(scaled, Y, 8).order == gram_schmidt_select(X, Y, 8).order
    elapsed = time.perf_counter() - t0
    ok = recovered == 100 and oracle_ok == 30 and scale_ok == 20 and elapsed <= 30.0
    report(5, "greedy selection oracles", ok,
           f"planted {recovered}/100, brute force {oracle_ok}/30, scale {scale_ok}/20, {elapsed:.1f} s")


def test_criterion_6_kalman(report):
    r = np.random.default_rng(6)
    X = r.uniform(-1, 1, size=(600, 3))
    H_true = r.normal(size=(48, 3))
    h_err = float(np.linalg.norm(train_kalman(X, X @ H_true.T).H - H_true))
    worst_eig, worst_asym, failures = _fuzz(1000, 1000, 606)
    ric = 0.0
    for seed in range(5):
        rr = np.random.default_rng(600 + seed)
        m = random_model(rr, D=int(rr.integers(1, 7)), k=int(rr.integers(1, 10)))
        state = DecodeState.initial(m)
        for _ in range(3000):
            state = decode_step(m, state, rr.normal(size=m.k))
        ric = max(ric, float(np.max(np.abs(state.P - riccati_fixed_point(m)))))
    ok = h_err <= 1e-6 and failures == 0 and worst_asym == 0.0 and worst_eig >= -1e-10 and ric <= 1e-8
    report(6, "Kalman fit, covariance PSD over 1e6 fuzzed steps, Riccati fixed point", ok,
           f"H error {h_err:.1e}, min eig {worst_eig:.1e}, Riccati error {ric:.1e}")


def test_criterion_7_statistics(report):
    holm = holm_bonferroni([0.01, 0.2, 0.03], alpha=0.05, m=3)
    values = list(range(1, 10)) + [100]
    flagged = [v for v, m in zip(values, tukey_outliers(values)) if m]
    tt = paired_ttest([1, 2, 3, 4], [0, 0, 0, 0])
    p_oracle = t_two_sided_p(tt.t, 3)
    ok = (int(np.sum(holm.rejected)) == 1 and flagged == [100] and abs(tt.t - 3.873) <= 1e-3
          and abs(tt.p - 0.0305) <= 1e-3 and abs(tt.p - p_oracle) <= 1e-3)
    report(7, "Holm, Tukey, paired t", ok,
           f"Holm rejects {int(np.sum(holm.rejected))}, Tukey flags {flagged}, t={tt.t:.4f} p={tt.p:.4f}")


def test_criterion_8_scoring(report):
    score = bbt_score(16, 30.0, "modified").score
    lo, hi = band_torque(0.0), band_torque(1.0)
    ok = score == 32 and lo == 0.34 and hi == 0.85
    report(8, "modified block test and band torque", ok, f"BBT {score:g}, torque {lo} / {hi} N m")


def test_criterion_9_performance(report):
    res = bench.run_benchmark(seconds=60.0)
    report(9, "streaming benchmark", res.passed, res.summary())
