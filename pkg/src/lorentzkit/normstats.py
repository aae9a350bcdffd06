"""Lorentzian batch statistics and gyro batch normalization.

``GyroLBN`` normalizes with the closed-form Lorentzian centroid and the chord
(Lorentzian) Frechet variance. ``GyroBN`` is the slower variant whose mean is
found by Karcher iteration and whose variance uses geodesic distances; it is
kept for ablations and timing comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ConvergenceError, StateError
from .gyro import gyro_add, gyro_inverse, gyro_scale
from .lorentz import (
    DEFAULT_K,
    check_curvature,
    exp_map,
    log_map,
    lorentz_sq_chord,
    minkowski_sq_norm,
    origin,
    project_to_hyperboloid,
)

KARCHER_TOL = 1e-10
KARCHER_MAX_STEPS = 1000


def _batch_axes(x):
    return tuple(range(ad.no_grad_data(x).ndim - 1))


def _as_points(points):
    return points if isinstance(points, ad.Tensor) else np.asarray(points, dtype=np.float64)


def lorentzian_centroid(points, weights=None, k=DEFAULT_K, axis=None):
    """Weighted centroid ``sum(w x) / (sqrt(-K) |‖sum(w x)‖_L|)``.

    This minimizes the weighted sum of squared chord distances. ``axis``
    selects the reduced point axes (default: every axis but the last).
    """
    c = -check_curvature(k)
    points = _as_points(points)
    if axis is None:
        axis = _batch_axes(points)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or not np.any(w > 0):
            raise ContractError("centroid weights must be nonnegative with positive sum")
        w = w / w.sum()
        points = ad.mul(w[..., None], points)
        total = ad.sum(points, axis=axis)
    else:
        total = ad.mean(points, axis=axis)
    n2 = ad.abs(minkowski_sq_norm(total, keepdims=True))
    return ad.div(total, ad.mul(np.sqrt(c), ad.sqrt(n2)))


def frechet_variance(points, mean, k=DEFAULT_K, axis=None):
    """Mean squared chord distance from ``points`` to ``mean``."""
    points = _as_points(points)
    if axis is None:
        axis = _batch_axes(points)
    d2 = ad.clamp_min(lorentz_sq_chord(points, mean, k), 0.0)
    return ad.mean(d2, axis=axis)


def frechet_mean_iterative(points, iters="converge", k=DEFAULT_K):
    """Karcher mean ``mu <- exp_mu(mean_i log_mu(x_i))`` from the centroid.

    ``iters`` is a positive step count or ``"converge"`` (stop once the step
    norm drops below 1e-10, failing after 1000 steps).
    """
    points = _as_points(points)
    axes = _batch_axes(points)
    mu = lorentzian_centroid(points, k=k)

    def advance(mu):
        step = ad.mean(log_map(mu, points, k), axis=axes)
        # the log map amplifies any constraint residual of mu, so re-project every step
        return project_to_hyperboloid(exp_map(mu, step, k, check=False), k), step

    if iters == "converge":
        for _ in range(KARCHER_MAX_STEPS):
            mu, step = advance(mu)
            if np.sqrt(max(float(minkowski_sq_norm(ad.no_grad_data(step))), 0.0)) < KARCHER_TOL:
                return mu
        raise ConvergenceError(f"Karcher iteration did not converge in {KARCHER_MAX_STEPS} steps")
    iters = int(iters)
    if iters < 1:
        raise ContractError("iters must be a positive integer or 'converge'")
    for _ in range(iters):
        mu, _ = advance(mu)
    return mu


def geodesic_variance(points, mean, k=DEFAULT_K):
    """Mean squared geodesic distance, via |log_mean(x)|_L^2 (smooth at 0)."""
    points = _as_points(points)
    v = log_map(mean, points, k)
    return ad.mean(ad.clamp_min(minkowski_sq_norm(v), 0.0), axis=_batch_axes(points))


@dataclass
class BatchStats:
    mean: np.ndarray
    variance: float


@dataclass
class NormState:
    """Learnable scale/bias and running statistics of one normalization layer."""

    dim: int
    k: float = DEFAULT_K
    momentum: float = 0.1
    eps: float = 1e-5
    track_running: bool = True
    gamma: ad.Tensor = None
    beta: ad.Tensor = None
    running_mean: np.ndarray = None
    running_var: float = 1.0
    num_updates: int = 0

    def __post_init__(self):
        if self.gamma is None:
            self.gamma = ad.Tensor(1.0, requires_grad=True, name="gamma")
        if self.beta is None:
            self.beta = ad.Tensor(origin(self.k, self.dim), requires_grad=True, name="beta")
        if self.running_mean is None:
            self.running_mean = origin(self.k, self.dim)
        if not 0.0 < self.momentum <= 1.0:
            raise ContractError("momentum must lie in (0, 1]")
        if self.eps <= 0:
            raise ContractError("eps must be positive")

    def update_running(self, mean, variance):
        mean = ad.no_grad_data(mean)
        rm = self.running_mean
        self.running_mean = exp_map(rm, self.momentum * log_map(rm, mean, self.k), self.k, check=False)
        self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * float(
            ad.no_grad_data(variance))
        self.num_updates += 1


def normalize(x, mean, variance, state: NormState):
    """``beta (+) ((gamma / sqrt(var + eps)) (.) ((-mean) (+) x))``."""
    k = state.k
    centered = gyro_add(gyro_inverse(mean), x, k)
    scale = ad.div(state.gamma, ad.sqrt(ad.add(variance, state.eps)))
    return gyro_add(state.beta, gyro_scale(scale, centered, k), k)


def _forward(batch, state, mode, stats_fn):
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    batch = _as_points(batch)
    if ad.no_grad_data(batch).size == 0:
        raise ContractError("empty batch")
    if mode == "eval" and state.track_running:
        if state.num_updates == 0:
            raise StateError("running statistics were never updated")
        return normalize(batch, state.running_mean, state.running_var, state)
    mean, var = stats_fn(batch)
    if mode == "train" and state.track_running:
        state.update_running(mean, var)
    return normalize(batch, mean, var, state)


def batch_stats(batch, k=DEFAULT_K):
    mean = lorentzian_centroid(batch, k=k)
    return mean, frechet_variance(batch, mean, k)


def gyrolbn_forward(batch, state: NormState, mode="train"):
    """GyroLBN with closed-form centroid and chord variance.

    In eval mode with ``track_running`` the running statistics replace the
    batch statistics; without it, eval also normalizes with batch statistics.
    """
    return _forward(batch, state, mode, lambda b: batch_stats(b, state.k))


def gyrobn_forward(batch, state: NormState, mode="train", iters="converge"):
    """GyroBN with Karcher mean and geodesic variance."""

    def stats(b):
        mean = frechet_mean_iterative(b, iters, state.k)
        return mean, geodesic_variance(b, mean, state.k)

    return _forward(batch, state, mode, stats)


@dataclass
class GyroLBN:
    """Layer wrapper: normalizes all leading axes of its input jointly."""

    dim: int
    k: float = DEFAULT_K
    momentum: float = 0.1
    eps: float = 1e-5
    track_running: bool = True
    iters: object = None  # None -> closed-form statistics; int/"converge" -> GyroBN
    state: NormState = field(init=False)

    def __post_init__(self):
        self.state = NormState(self.dim, self.k, self.momentum, self.eps, self.track_running)

    def __call__(self, x, training=False):
        mode = "train" if training else "eval"
        if self.iters is None:
            return gyrolbn_forward(x, self.state, mode)
        return gyrobn_forward(x, self.state, mode, self.iters)

    def parameters(self):
        return {"gamma": self.state.gamma, "beta": self.state.beta}
