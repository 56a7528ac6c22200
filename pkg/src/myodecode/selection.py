"""Stepwise Gram-Schmidt forward selection of decoder input features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, IllPosedError, InvalidArgumentError

DEFAULT_K = 48
REORTHO_EVERY = 8
_DEGENERATE_TOL = 1e-12
_SPAN_TOL = 1e-10


@dataclass(frozen=True)
class SelectionResult:
    """Picked feature indices in pick order.

    ``score_per_step[s]`` is the cumulative fraction of centered kinematic
    variance explained after pick ``s``.
    """

    order: tuple
    score_per_step: tuple

    def __len__(self):
        return len(self.order)

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.order, dtype=np.int64)


def gram_schmidt_select(X, Y, k: int = DEFAULT_K) -> SelectionResult:
    """Greedy forward selection of ``k`` columns of ``X`` (T x F) for ``Y`` (T x D).

    At each step the candidate whose component orthogonal to the already
    selected features explains the most residual kinematic variance (summed
    over DOFs) is picked; candidates and residual are then deflated by it.
    Columns are centered and unit-normalized first, so the pick order does
    not depend on feature scale. Zero-variance columns are never picked and
    ties go to the lowest index.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise InvalidArgumentError(f"X {X.shape} and Y {Y.shape} are not row-aligned")
    T, F = X.shape
    if k < 0 or k > F:
        raise InvalidArgumentError(f"cannot select {k} of {F} features")
    if k == 0:
        return SelectionResult((), ())
    if T <= k:
        raise IllPosedError(f"{T} observations cannot support {k} selected features")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise InvalidArgumentError("selection inputs must be finite")

    Xc = X - X.mean(axis=0)
    norms = np.linalg.norm(Xc, axis=0)
    valid = norms > _DEGENERATE_TOL * max(norms.max(), 1e-300)
    Xn = np.zeros_like(Xc)
    Xn[:, valid] = Xc[:, valid] / norms[valid]
    Yc = Y - Y.mean(axis=0)
    total = float(np.sum(Yc**2))

    V = Xn.copy()
    R = Yc.copy()
    available = valid.copy()
    basis = np.empty((T, k))
    order, scores = [], []
    for step in range(k):
        cn = np.einsum("tf,tf->f", V, V)
        usable = available & (cn > _SPAN_TOL)
        if not usable.any():
            raise IllPosedError(
                f"only {step} linearly independent non-degenerate features; asked for {k}"
            )
        proj = V.T @ R
        gain = np.full(F, -np.inf)
        gain[usable] = np.einsum("fd,fd->f", proj[usable], proj[usable]) / cn[usable]
        j = int(np.argmax(gain))
        q = V[:, j] / np.sqrt(cn[j])
        basis[:, step] = q
        available[j] = False
        order.append(j)
        if (step + 1) % REORTHO_EVERY == 0:
            B = basis[:, : step + 1]
            V = Xn - B @ (B.T @ Xn)
            R = Yc - B @ (B.T @ Yc)
        else:
            V -= np.outer(q, q @ V)
            R -= np.outer(q, q @ R)
        scores.append(1.0 - float(np.sum(R**2)) / total if total > 0 else 0.0)
    return SelectionResult(tuple(order), tuple(scores))


def apply_selection(values, result: SelectionResult) -> np.ndarray:
    values = np.asarray(getattr(values, "values", values), dtype=float)
    idx = result.indices
    if len(idx) and (idx.min() < 0 or idx.max() >= values.shape[-1]):
        raise CorruptionError(
            f"selection index out of range for {values.shape[-1]}-feature frames"
        )
    return values[..., idx]
