"""Fuzzy c-means context clustering and the affine consequent trainer.

Both operations work in range-normalized coordinates: callers normalize
context/configuration vectors to [0, 1] per dimension before clustering or
training, and denormalize results at their own boundary. Cluster
memberships use the standard inverse-distance formula both here and at
inference time, so training and reasoning share one definition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fuzzy_core import Flags

log = logging.getLogger(__name__)

FLAG_CENTER_COLLAPSE = "fcm_center_collapse"
FLAG_CENTER_JITTER = "fcm_center_jitter"
FLAG_EMPTY_CLUSTER = "empty_cluster_global_fit"

_ZERO_DIST = 1e-24


class TrainingDiverged(RuntimeError):
    """Consequent training increased its error instead of reducing it."""


@dataclass(frozen=True)
class FCMSettings:
    fuzzifier: float = 2.0
    tol: float = 1e-6
    max_iter: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.fuzzifier <= 1.0:
            raise ValueError("fuzzifier must exceed 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class FCMResult:
    centers: np.ndarray
    memberships: np.ndarray
    fuzzifier: float
    iterations: int
    objective_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.centers.shape[0] < 1:
            raise ValueError("need at least one cluster")
        rows = self.memberships.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise ValueError("membership rows must sum to 1")
        if np.any(self.memberships < -1e-12) or np.any(self.memberships > 1.0 + 1e-12):
            raise ValueError("memberships must lie in [0, 1]")


def fcm_memberships(centers: np.ndarray, X: np.ndarray, fuzzifier: float = 2.0) -> np.ndarray:
    """(B, K) inverse-distance memberships of query points in the clusters.

    A point coinciding with a center belongs fully (and equally, on ties)
    to the coincident clusters.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    U = np.zeros_like(d2)
    hit = d2 <= _ZERO_DIST
    on_center = hit.any(axis=1)
    if on_center.any():
        h = hit[on_center]
        U[on_center] = h / h.sum(axis=1, keepdims=True)
    rest = ~on_center
    if rest.any():
        inv = d2[rest] ** (-1.0 / (fuzzifier - 1.0))
        U[rest] = inv / inv.sum(axis=1, keepdims=True)
    return U


def fcm_cluster(
    points: np.ndarray,
    K: int,
    settings: FCMSettings = FCMSettings(),
    flags: Flags | None = None,
) -> FCMResult:
    """Standard fuzzy c-means with seeded initialization from distinct points.

    Alternates membership and center updates until the largest center
    movement drops below settings.tol or max_iter is reached.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    N, D = X.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > N:
        raise ValueError(f"K={K} exceeds the {N} available points")
    rng = np.random.default_rng(settings.seed)
    distinct = np.unique(X, axis=0)
    if distinct.shape[0] >= K:
        centers = distinct[rng.choice(distinct.shape[0], size=K, replace=False)]
    else:
        centers = X[rng.choice(N, size=K, replace=False)].astype(float)
        centers += rng.normal(scale=1e-6, size=centers.shape)
        if flags is not None:
            flags.raise_flag(FLAG_CENTER_JITTER, f"only {distinct.shape[0]} distinct points for K={K}")

    m = settings.fuzzifier
    U = fcm_memberships(centers, X, m)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, settings.max_iter + 1):
        Um = U**m
        mass = Um.sum(axis=0)
        mass = np.where(mass > 0.0, mass, 1.0)
        new_centers = (Um.T @ X) / mass[:, None]
        # Two centers collapsing onto each other make memberships degenerate;
        # nudge one apart and keep going.
        for i in range(K):
            for j in range(i + 1, K):
                if np.linalg.norm(new_centers[i] - new_centers[j]) < 1e-9:
                    new_centers[j] = new_centers[j] + rng.normal(scale=1e-6, size=D)
                    if flags is not None:
                        flags.raise_flag(FLAG_CENTER_COLLAPSE, f"clusters {i} and {j}")
        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1))) if K else 0.0
        centers = new_centers
        U = fcm_memberships(centers, X, m)
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        history.append(float((U**m * d2).sum()))
        if movement < settings.tol:
            break
    return FCMResult(
        centers=centers,
        memberships=U,
        fuzzifier=m,
        iterations=iterations,
        objective_history=history,
    )


@dataclass(frozen=True)
class TrainerSettings:
    epochs: int = 100
    goal: float = 0.05
    rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.rate <= 0.0:
            raise ValueError("rate must be positive")


@dataclass
class CoefficientMatrix:
    """Per-cluster, per-output affine coefficients (a0, a1..am).

    ``a`` has shape (clusters, outputs, inputs + 1). ``training_mse`` and
    ``mse_history`` record the blended prediction error on the training set.
    """

    a: np.ndarray
    training_mse: float | None = None
    mse_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.a.ndim != 3:
            raise ValueError("coefficients must be (clusters, outputs, inputs+1)")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("coefficients must be finite")


def _blended_mse(theta: np.ndarray, Z: np.ndarray, Y: np.ndarray, U: np.ndarray) -> float:
    """Mean squared error of the membership-blended affine predictions."""
    preds = np.einsum("nd,kod->nko", Z, theta)
    blend = np.einsum("nk,nko->no", U / U.sum(axis=1, keepdims=True), preds)
    return float(np.mean((blend - Y) ** 2))


def train_consequents(
    samples: Sequence[tuple[np.ndarray, np.ndarray]],
    clusters: FCMResult,
    settings: TrainerSettings = TrainerSettings(),
    flags: Flags | None = None,
) -> CoefficientMatrix:
    """Fit per-cluster affine consequents by membership-weighted descent.

    Coefficients start at zero and are updated sample-by-sample in a fixed
    cyclic order (classic least-mean-squares); one epoch is one pass over
    the samples. Training stops when the blended mean squared error on the
    training set reaches settings.goal or after settings.epochs passes.
    """
    X = np.stack([np.asarray(x, dtype=float) for x, _ in samples])
    Y = np.stack([np.asarray(y, dtype=float) for _, y in samples])
    N, D = X.shape
    O = Y.shape[1]
    U = np.asarray(clusters.memberships, dtype=float)
    if U.shape[0] != N:
        raise ValueError(f"{U.shape[0]} membership rows for {N} samples")
    K = U.shape[1]

    weights = U.copy()
    mass = weights.sum(axis=0)
    empty = mass <= 1e-12
    if empty.any():
        # A starved cluster falls back to the global (unweighted) fit.
        weights[:, empty] = 1.0
        if flags is not None:
            for k in np.nonzero(empty)[0]:
                flags.raise_flag(FLAG_EMPTY_CLUSTER, f"cluster {int(k)}")

    Z = np.hstack([np.ones((N, 1)), X])
    P = D + 1
    eta = settings.rate

    # One epoch of cyclic per-sample updates is an affine map theta -> M@theta + b;
    # build it once, then iterate it. This is exactly sequential LMS, just not
    # re-walked sample-by-sample every epoch.
    M = np.broadcast_to(np.eye(P), (K, P, P)).copy()
    b = np.zeros((K, O, P))
    for i in range(N):
        z = Z[i]
        F = np.eye(P)[None, :, :] - eta * weights[i][:, None, None] * np.outer(z, z)[None, :, :]
        M = F @ M
        b = np.einsum("kab,kob->koa", F, b) + eta * weights[i][:, None, None] * Y[i][None, :, None] * z

    theta = np.zeros((K, O, P))
    history: list[float] = []
    initial = _blended_mse(theta, Z, Y, U)
    for epoch in range(settings.epochs):
        theta = np.einsum("kab,kob->koa", M, theta) + b
        mse = _blended_mse(theta, Z, Y, U)
        history.append(mse)
        if not np.isfinite(mse) or mse > 10.0 * max(initial, 1e-12):
            raise TrainingDiverged(
                f"epoch {epoch + 1}: blended MSE {mse:.6g} (started at {initial:.6g})"
            )
        if mse <= settings.goal:
            break
    log.debug("trained %d clusters x %d outputs in %d epochs (mse=%.6g)", K, O, len(history), history[-1])
    return CoefficientMatrix(a=theta, training_mse=history[-1], mse_history=history)
