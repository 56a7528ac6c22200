import warnings

import numba
import numpy as np
import pytest

from myodecode import _kernels
from myodecode.errors import (
    DataError, IllPosedError, InvalidArgumentError, NumericalError, RankDeficiencyWarning,
)
from myodecode.kalman import (
    DecodeState, KalmanModel, OutputStage, decode_session, decode_step, riccati_posterior, train_kalman,
)
from myodecode.selection import SelectionResult
from myodecode.streaming import StreamingPipeline


def random_model(r, D=3, k=6, a_radius=0.95):
    A = r.normal(size=(D, D))
    A *= a_radius / max(np.abs(np.linalg.eigvals(A)))
    B = r.normal(size=(D, D))
    C = r.normal(size=(k, k))
    W = 0.05 * B @ B.T + 1e-3 * np.eye(D)
    Q = C @ C.T / k + 0.1 * np.eye(k)
    return KalmanModel(A=A, W=W, H=r.normal(size=(k, D)), Q=Q, P0=W.copy())


def riccati_fixed_point(model, tol=1e-15, max_iter=200_000):
    """Posterior covariance by iterating the covariance recursion to a fixed point.

    Uses the textbook (non-Joseph) update and a plain matrix inverse, so it
    shares no code path with the decoder.
    """
    A, W, H, Q = model.A, model.W, model.H, model.Q
    P = np.eye(model.D)
    for _ in range(max_iter):
        Pp = A @ P @ A.T + W
        S = H @ Pp @ H.T + Q
        P_new = Pp - Pp @ H.T @ np.linalg.inv(S) @ H @ Pp
        if np.max(np.abs(P_new - P)) < tol:
            return P_new
        P = P_new
    raise AssertionError("Riccati iteration did not converge")


# -- training --------------------------------------------------------------

def test_noiseless_H_recovery(rng):
    X = rng.uniform(-1, 1, size=(600, 3))
    H_true = rng.normal(size=(48, 3))
    model = train_kalman(X, X @ H_true.T)
    assert np.linalg.norm(model.H - H_true) <= 1e-6
    assert np.max(np.abs(model.Q)) <= 1e-12


def test_exact_scalar_decay_recovers_A():
    x = 0.9 ** np.arange(60)[:, None]
    model = train_kalman(x, np.hstack([x, 2 * x]))
    np.testing.assert_allclose(model.A, 0.9 * np.eye(1), atol=1e-9)
    assert np.max(np.abs(model.W)) <= 1e-18


def test_exact_rotation_decay_recovers_A(rng):
    c, s = np.cos(0.3), np.sin(0.3)
    A_true = 0.9 * np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    x = np.empty((80, 3))
    x[0] = [1.0, 0.5, -0.7]
    for t in range(79):
        x[t + 1] = A_true @ x[t]
    model = train_kalman(x, x @ rng.normal(size=(5, 3)).T)
    np.testing.assert_allclose(model.A, A_true, atol=1e-9)
    assert np.max(np.abs(model.W)) <= 1e-18
    np.testing.assert_array_equal(model.P0, model.W)


def test_noise_covariances_are_residual_covariances(rng):
    X = rng.normal(size=(400, 2))
    Z = X @ rng.normal(size=(4, 2)).T + rng.normal(size=(400, 4))
    m = train_kalman(X, Z)
    R = Z - X @ m.H.T
    np.testing.assert_allclose(m.Q, R.T @ R / 400, atol=1e-12)
    E = X[1:] - X[:-1] @ m.A.T
    np.testing.assert_allclose(m.W, E.T @ E / 399, atol=1e-12)
    for M in (m.W, m.Q, m.P0):
        np.testing.assert_array_equal(M, M.T)


def test_constant_inputs_take_ridge_path():
    X = np.ones((50, 3))
    Z = np.full((50, 8), 2.0)
    with pytest.warns(RankDeficiencyWarning):
        m = train_kalman(X, Z)
    for M in (m.A, m.W, m.H, m.Q, m.P0):
        assert np.all(np.isfinite(M))


def test_zero_kinematics_take_ridge_path():
    with pytest.warns(RankDeficiencyWarning):
        m = train_kalman(np.zeros((20, 2)), np.ones((20, 4)))
    assert np.all(np.isfinite(m.H))


def test_full_rank_fit_has_no_warning(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        train_kalman(rng.normal(size=(100, 3)), rng.normal(size=(100, 5)))


def test_training_errors(rng):
    with pytest.raises(IllPosedError):
        train_kalman(np.zeros((1, 3)), np.zeros((1, 4)))
    with pytest.raises(InvalidArgumentError):
        train_kalman(np.zeros((10, 3)), np.zeros((9, 4)))
    X = rng.normal(size=(10, 2))
    X[3, 1] = np.nan
    with pytest.raises(DataError):
        train_kalman(X, rng.normal(size=(10, 4)))


def test_model_validation_and_immutability(rng):
    m = random_model(rng)
    with pytest.raises(ValueError):
        m.A[0, 0] = 1.0
    with pytest.raises(InvalidArgumentError):
        KalmanModel(A=np.eye(3), W=np.eye(2), H=np.zeros((4, 3)), Q=np.eye(4), P0=np.eye(3))
    assert (m.D, m.k) == (3, 6)


# -- decoding --------------------------------------------------------------

def test_zero_innovation_keeps_prediction(rng):
    m = random_model(rng)
    state = DecodeState(rng.normal(size=3), m.P0.copy())
    prior = m.A @ state.x
    post = decode_step(m, state, m.H @ prior)
    np.testing.assert_allclose(post.x, prior, atol=1e-12)
    np.testing.assert_allclose(post.innovation, 0, atol=1e-12)


def test_huge_measurement_noise_ignores_measurements(rng):
    D, k = 3, 5
    m = KalmanModel(A=0.9 * np.eye(D), W=np.zeros((D, D)), H=rng.normal(size=(k, D)),
                    Q=1e12 * np.eye(k), P0=0.1 * np.eye(D))
    state = DecodeState(rng.normal(size=D), m.P0.copy())
    post = decode_step(m, state, 100 * rng.normal(size=k))
    np.testing.assert_allclose(post.x, m.A @ state.x, atol=1e-8)
    np.testing.assert_allclose(post.P, m.A @ state.P @ m.A.T, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_covariance_converges_to_riccati_fixed_point(seed):
    r = np.random.default_rng(seed)
    m = random_model(r, D=int(r.integers(1, 7)), k=int(r.integers(1, 10)))
    oracle = riccati_fixed_point(m)
    state = DecodeState.initial(m)
    for _ in range(3000):
        state = decode_step(m, state, r.normal(size=m.k))
    assert np.max(np.abs(state.P - oracle)) <= 1e-8
    assert np.max(np.abs(riccati_posterior(m) - oracle)) <= 1e-8


def test_kernel_covariance_converges_to_riccati_fixed_point(rng):
    m = random_model(rng, D=3, k=48)
    oracle = riccati_fixed_point(m)
    pipe_buffers = _step_buffers(m)
    z = np.zeros(m.k)
    for _ in range(3000):
        assert _kernels.kalman_step(m.A, m.W, m.H, m.Q, *pipe_buffers[:2], z, *pipe_buffers[2:]) == 0
    assert np.max(np.abs(pipe_buffers[1] - oracle)) <= 1e-8


def _step_buffers(m, x=None):
    D, k = m.D, m.k
    x = np.zeros(D) if x is None else x.copy()
    return [x, m.P0.copy(), np.zeros(D), np.zeros((D, D)), np.zeros((D, D)), np.zeros((D, k)),
            np.zeros((k, k)), np.zeros((D, k)), np.zeros((D, k)), np.zeros(k)]


def test_kernel_agrees_with_numpy_reference(rng):
    m = random_model(rng, D=6, k=20)
    buf = _step_buffers(m)
    state = DecodeState.initial(m)
    for _ in range(400):
        z = 3 * rng.normal(size=m.k)
        state = decode_step(m, state, z)
        _kernels.kalman_step(m.A, m.W, m.H, m.Q, buf[0], buf[1], z, *buf[2:])
        np.testing.assert_allclose(buf[0], state.x, rtol=1e-9, atol=1e-10)
        np.testing.assert_allclose(buf[1], state.P, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(buf[9], state.innovation, rtol=1e-9, atol=1e-10)


@numba.njit(cache=True)
def _fuzz(n_models, n_steps, seed):
    np.random.seed(seed)
    worst_eig = np.inf
    worst_asym = 0.0
    failures = 0
    for _ in range(n_models):
        D = np.random.randint(1, 7)
        k = np.random.randint(1, 9)
        A = np.random.randn(D, D)
        rad = np.max(np.abs(np.linalg.eigvals(A.astype(np.complex128))))
        A *= np.random.uniform(0.0, 1.0) / rad
        r = np.random.randint(0, D + 1)  # W may be rank deficient
        B = np.random.randn(D, r) * 10.0 ** np.random.uniform(-3, 1)
        W = B @ B.T
        C = np.random.randn(k, k)
        Q = C @ C.T * 10.0 ** np.random.uniform(-3, 2) + 1e-6 * np.eye(k)
        H = np.random.randn(k, D) * 10.0 ** np.random.uniform(-2, 2)
        P = W + 10.0 ** np.random.uniform(-4, 0) * np.eye(D)
        x = np.zeros(D)
        xp = np.zeros(D)
        Pp = np.zeros((D, D))
        tmp = np.zeros((D, D))
        PHt = np.zeros((D, k))
        S = np.zeros((k, k))
        K = np.zeros((D, k))
        KQ = np.zeros((D, k))
        innov = np.zeros(k)
        z = np.zeros(k)
        scale = 10.0 ** np.random.uniform(-2, 3)
        for _ in range(n_steps):
            for i in range(k):
                z[i] = scale * np.random.randn()
            failures += _kernels.kalman_step(A, W, H, Q, x, P, z, xp, Pp, tmp, PHt, S, K, KQ, innov)
            for i in range(D):
                for j in range(D):
                    worst_asym = max(worst_asym, abs(P[i, j] - P[j, i]))
            worst_eig = min(worst_eig, np.linalg.eigvalsh(P)[0])
    return worst_eig, worst_asym, failures


def test_posterior_covariance_psd_over_a_million_fuzzed_steps():
    worst_eig, worst_asym, failures = _fuzz(1000, 1000, 2024)
    assert failures == 0
    assert worst_asym == 0.0
    assert worst_eig >= -1e-10


def test_innovation_statistics_on_model_generated_data():
    r = np.random.default_rng(99)
    D, k, T = 2, 4, 10_000
    m = random_model(r, D=D, k=k, a_radius=0.9)
    x = np.zeros(D)
    Lw, Lq = np.linalg.cholesky(m.W), np.linalg.cholesky(m.Q)
    state = DecodeState.initial(m)
    innov = np.empty((T, k))
    for t in range(T):
        x = m.A @ x + Lw @ r.normal(size=D)
        z = m.H @ x + Lq @ r.normal(size=k)
        state = decode_step(m, state, z)
        innov[t] = state.innovation
    P_post = riccati_fixed_point(m)
    P_prior = m.A @ P_post @ m.A.T + m.W
    S = m.H @ P_prior @ m.H.T + m.Q
    burn = 200
    e = innov[burn:]
    sem = np.sqrt(np.diag(S) / len(e))
    assert np.all(np.abs(e.mean(0)) <= 4 * sem)
    S_hat = np.cov(e, rowvar=False)
    assert np.linalg.norm(S_hat - S) / np.linalg.norm(S) <= 0.10
    assert np.all(np.abs(np.diag(S_hat) / np.diag(S) - 1) <= 0.10)


def test_zero_stream_decays_monotonically(rng):
    D, k = 3, 6
    H = np.linalg.qr(rng.normal(size=(k, D)))[0] * 2.0  # H^T H isotropic
    m = KalmanModel(A=0.9 * np.eye(D), W=0.01 * np.eye(D), H=H, Q=np.eye(k), P0=0.01 * np.eye(D))
    state = DecodeState(np.array([0.8, -0.5, 0.3]), m.P0.copy())
    norms = [np.linalg.norm(state.x)]
    for _ in range(60):
        state = decode_step(m, state, np.zeros(k))
        norms.append(np.linalg.norm(state.x))
    assert np.all(np.diff(norms) < 0)
    assert norms[-1] < 1e-3


def test_decode_session_deterministic_and_empty(rng):
    m = random_model(rng)
    Z = rng.normal(size=(50, m.k))
    a, b = decode_session(m, Z), decode_session(m, Z)
    assert a.tobytes() == b.tobytes()
    assert decode_session(m, np.zeros((0, m.k))).shape == (0, m.D)


def test_output_clamped_but_state_unclamped(rng):
    D, k = 1, 2
    m = KalmanModel(A=np.eye(D), W=np.eye(D), H=np.ones((k, D)), Q=1e-6 * np.eye(k), P0=np.eye(D))
    traj = decode_session(m, np.full((5, k), 3.0))
    assert np.all(traj == 1.0)
    state = decode_step(m, DecodeState.initial(m), np.full(k, 3.0))
    assert state.x[0] == pytest.approx(3.0, rel=1e-5)


def test_output_stage_extension_points():
    x = np.array([0.05, -0.3, 2.0])
    np.testing.assert_array_equal(OutputStage().apply(x), [0.05, -0.3, 1.0])
    out = OutputStage(deadband=0.1, gain=np.array([1.0, 2.0, 0.25])).apply(x)
    np.testing.assert_allclose(out, [0.0, -0.6, 0.5])


def test_decode_step_errors(rng):
    m = random_model(rng)
    state = DecodeState.initial(m)
    with pytest.raises(InvalidArgumentError):
        decode_step(m, state, np.zeros(m.k + 1))
    z = np.zeros(m.k)
    z[2] = np.inf
    with pytest.raises(DataError):
        decode_step(m, state, z)
    bad = KalmanModel(A=m.A, W=m.W, H=m.H, Q=-10 * np.eye(m.k), P0=m.P0)
    with pytest.raises(NumericalError, match="min eigenvalue"):
        decode_step(bad, state, np.zeros(m.k))


def test_streaming_reports_non_pd_innovation(rng):
    k = 48
    bad = KalmanModel(A=np.eye(3), W=np.eye(3), H=np.zeros((k, 3)), Q=-np.eye(k), P0=np.eye(3))
    sel = SelectionResult(tuple(range(k)), tuple(np.zeros(k)))
    with pytest.raises(NumericalError):
        StreamingPipeline(model=bad, selection=sel).run(rng.normal(size=(1000, 32)))


def test_streaming_decode_matches_numpy_decode(rng):
    from myodecode.streaming import extract_features

    raw = 30 * rng.normal(size=(5000, 32))
    feats = extract_features(raw)
    valid = feats.features[feats.valid]
    order = tuple(int(i) for i in rng.choice(528, 48, replace=False))
    sel = SelectionResult(order, tuple(np.zeros(48)))
    baseline = valid.mean(0)
    m = random_model(rng, D=3, k=48)
    out = StreamingPipeline(model=m, selection=sel, baseline=baseline).run(raw)
    ref = decode_session(m, (valid - baseline)[:, list(order)])
    np.testing.assert_allclose(out.trajectory[out.valid], ref, rtol=1e-8, atol=1e-10)
    # warm-up ticks hold the rest output
    assert np.all(out.trajectory[~out.valid] == 0)
