"""Riemannian SGD for hyperboloid parameters and momentum SGD for flat ones."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, TrainingAborted
from .lorentz import DEFAULT_K, check_curvature, exp_map, minkowski_inner, project_to_hyperboloid


def riemannian_grad(x, ambient_grad, k=DEFAULT_K):
    """Convert a Euclidean ambient gradient into a tangent vector at ``x``.

    Flips the sign of the time component (the Minkowski metric) and removes
    the component along the normal: ``h - K<x,h>_L x``.
    """
    k = check_curvature(k)
    x = np.asarray(x, dtype=np.float64)
    h = np.array(ambient_grad, dtype=np.float64)
    h[..., 0] = -h[..., 0]
    return h - k * minkowski_inner(x, h, keepdims=True) * x


@dataclass
class ParamGroup:
    params: dict
    kind: str = "euclidean"
    lr: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    k: float = DEFAULT_K
    buffers: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("euclidean", "lorentz"):
            raise ConfigurationError(f"unknown parameter kind {self.kind!r}")
        if self.lr <= 0:
            raise ConfigurationError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight decay must be nonnegative")
        if self.kind == "lorentz" and (self.momentum or self.weight_decay):
            raise ConfigurationError("lorentz parameters take neither momentum nor weight decay")


def rsgd_step(group: ParamGroup, grads, lr_scale=1.0):
    """Update every tensor of ``group`` in place from ``grads`` (keyed by tensor).

    Euclidean: ``p *= 1 - lr*wd``; ``buf = mu*buf + g``; ``p -= lr*buf``.
    Lorentz: ``x <- exp_x(-lr * riemannian_grad(x, g))``, with the new time
    coordinate taken from the new spatial part. The plain exp map multiplies
    any off-manifold error of ``x`` by ``cosh^2`` of the step length, so
    rounding would otherwise compound from step to step.
    """
    lr = group.lr * lr_scale
    for name, p in group.params.items():
        g = grads.get(p)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise TrainingAborted(f"non-finite gradient for parameter {name!r}", parameter=name)
        if group.kind == "lorentz":
            step = riemannian_grad(p.data, g, group.k)
            with np.errstate(over="ignore", invalid="ignore"):
                moved = exp_map(p.data, -lr * step, group.k, check=False)
            if not np.all(np.isfinite(moved)):
                raise TrainingAborted(f"non-finite update for parameter {name!r}", parameter=name)
            p.data = project_to_hyperboloid(moved, group.k)
            continue
        if group.weight_decay:
            p.data = p.data * (1.0 - lr * group.weight_decay)
        if group.momentum:
            buf = group.buffers.get(name)
            buf = g.copy() if buf is None else group.momentum * buf + g
            group.buffers[name] = buf
            g = buf
        p.data = p.data - lr * g
    return group


class RiemannianSGD:
    """Owns several parameter groups and a step-decay learning-rate schedule."""

    def __init__(self, groups, drop_epochs=(), drop_gamma=0.1):
        self.groups = list(groups)
        self.drop_epochs = sorted(int(e) for e in drop_epochs)
        self.drop_gamma = float(drop_gamma)
        self.lr_scale = 1.0

    def set_epoch(self, epoch):
        drops = sum(1 for e in self.drop_epochs if epoch >= e)
        self.lr_scale = self.drop_gamma ** drops

    def step(self, grads):
        for group in self.groups:
            rsgd_step(group, grads, self.lr_scale)
