"""Linear Kalman decoder from selected sEMG features to DOF positions.

Training is plain least squares on paired (kinematics, features):

    x[t+1] = A x[t] + w,   w ~ N(0, W)
    z[t]   = H x[t] + q,   q ~ N(0, Q)

Decoding is the standard predict/update recursion with a Joseph-form
covariance update. Output positions are clamped to [-1, 1] only at the
consumer boundary (:class:`OutputStage`); the filter state stays linear.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DataError, IllPosedError, InvalidArgumentError, NumericalError, RankDeficiencyWarning

RIDGE_SCALE = 1e-6
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class KalmanModel:
    A: np.ndarray
    W: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ("A", "W", "H", "Q", "P0"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        D, k = self.D, self.k
        expected = {"A": (D, D), "W": (D, D), "H": (k, D), "Q": (k, k), "P0": (D, D)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvalidArgumentError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def D(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.H.shape[0]


@dataclass
class DecodeState:
    x: np.ndarray
    P: np.ndarray
    innovation: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def initial(cls, model: KalmanModel) -> DecodeState:
        return cls(np.zeros(model.D), model.P0.copy())


@dataclass(frozen=True)
class OutputStage:
    """Post-hoc per-DOF dead band and gain, then clamp to [-1, 1].

    Both stages are off by default (dead band 0, gain 1).
    """

    deadband: np.ndarray | None = None
    gain: np.ndarray | None = None

    def arrays(self, D: int) -> tuple[np.ndarray, np.ndarray]:
        db = np.zeros(D) if self.deadband is None else np.broadcast_to(self.deadband, (D,)).astype(float)
        g = np.ones(D) if self.gain is None else np.broadcast_to(self.gain, (D,)).astype(float)
        return np.ascontiguousarray(db), np.ascontiguousarray(g)

    def apply(self, x: np.ndarray) -> np.ndarray:
        db, g = self.arrays(x.shape[-1])
        y = np.where(np.abs(x) < db, 0.0, x) * g
        return np.clip(y, -1.0, 1.0)


def _ridge_solve(G: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    """Solve ``G M = B`` for symmetric PSD ``G``, adding a ridge if singular."""
    n = G.shape[0]
    tr = float(np.trace(G))
    if tr <= 0 or np.linalg.cond(G) > _COND_LIMIT:
        lam = RIDGE_SCALE * (tr / n if tr > 0 else 1.0)
        warnings.warn(
            f"rank-deficient kinematics while fitting {what}; adding ridge {lam:.3g}",
            RankDeficiencyWarning,
            stacklevel=3,
        )
        G = G + lam * np.eye(n)
    return linalg.solve(G, B, assume_a="pos")


def train_kalman(X, Z) -> KalmanModel:
    """Fit ``(A, W, H, Q)`` from kinematics ``X`` (T x D) and features ``Z`` (T x k)."""
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Z.ndim == 1:
        Z = Z[:, None]
    if X.shape[0] != Z.shape[0]:
        raise InvalidArgumentError(f"kinematics ({X.shape[0]}) and features ({Z.shape[0]}) differ in length")
    T = X.shape[0]
    if T < 2:
        raise IllPosedError("need at least two time steps to fit the state transition")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
        raise DataError("training data must be finite")

    X0, X1 = X[:-1], X[1:]
    A = _ridge_solve(X0.T @ X0, X0.T @ X1, "A").T
    E = X1 - X0 @ A.T
    W = E.T @ E / (T - 1)

    H = _ridge_solve(X.T @ X, X.T @ Z, "H").T
    R = Z - X @ H.T
    Q = R.T @ R / T

    W = 0.5 * (W + W.T)
    Q = 0.5 * (Q + Q.T)
    return KalmanModel(A=A, W=W, H=H, Q=Q, P0=W.copy())


def decode_step(model: KalmanModel, state: DecodeState, z) -> DecodeState:
    z = np.asarray(z, dtype=float)
    if z.shape != (model.k,):
        raise InvalidArgumentError(f"feature vector has shape {z.shape}, model expects ({model.k},)")
    if not np.all(np.isfinite(z)):
        raise DataError("non-finite feature vector")
    A, W, H, Q = model.A, model.W, model.H, model.Q

    x_prior = A @ state.x
    P_prior = A @ state.P @ A.T + W
    S = H @ P_prior @ H.T + Q
    S = 0.5 * (S + S.T)
    try:
        cf = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(S)
        raise NumericalError(
            f"innovation covariance not positive definite (min eigenvalue {eig[0]:.3g}, "
            f"max {eig[-1]:.3g})"
        ) from exc
    K = linalg.cho_solve(cf, H @ P_prior).T
    innovation = z - H @ x_prior
    x = x_prior + K @ innovation
    IKH = np.eye(model.D) - K @ H
    P = IKH @ P_prior @ IKH.T + K @ Q @ K.T
    P = 0.5 * (P + P.T)
    return DecodeState(x, P, innovation)


def decode_session(model: KalmanModel, features, output: OutputStage | None = None,
                   state: DecodeState | None = None) -> np.ndarray:
    """Decode a (T x k) feature stream into a clamped (T x D) trajectory."""
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        return np.zeros((0, model.D))
    output = output or OutputStage()
    state = state or DecodeState.initial(model)
    traj = np.empty((len(features), model.D))
    for t, z in enumerate(features):
        state = decode_step(model, state, z)
        traj[t] = state.x
    return output.apply(traj)


def riccati_posterior(model: KalmanModel) -> np.ndarray:
    """Steady-state posterior covariance from the discrete algebraic Riccati equation."""
    P_prior = linalg.solve_discrete_are(model.A.T, model.H.T, model.W, model.Q)
    S = model.H @ P_prior @ model.H.T + model.Q
    PHt = P_prior @ model.H.T
    return P_prior - PHt @ np.linalg.solve(S, PHt.T)
