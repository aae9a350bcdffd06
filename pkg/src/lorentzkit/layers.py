"""Intrinsic Lorentz layers.

Every layer maps points of some hyperboloid to points of another and keeps
the output on the manifold by recomputing time coordinates from the spatial
ones. Functional forms come first; thin parameter-holding classes follow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from . import autodiff as ad
from .errors import (
    ConfigurationError,
    DegenerateHyperplaneError,
    DimensionError,
    NumericDomainError,
)
from .gyro import gyro_add
from .lorentz import (
    DEFAULT_K,
    check_curvature,
    lift_space,
    origin,
    project_to_hyperboloid,
    space,
    time,
)
from .normstats import lorentzian_centroid

ZNORM_FLOOR = 1e-12


def _sqrt_c(k):
    return float(np.sqrt(-check_curvature(k)))


def _row_norms(z):
    return ad.norm(z, axis=-1)


def _check_rows(z):
    zn = np.linalg.norm(np.atleast_2d(ad.no_grad_data(z)), axis=-1)
    if np.any(zn < ZNORM_FLOOR):
        raise DegenerateHyperplaneError(f"hyperplane orientation norm {zn.min():.3g} below guard")


def hyperplane_numerator(x, z, a, k=DEFAULT_K):
    """``cosh(sqrt(-K) a) <z, x_s> - sinh(sqrt(-K) a) |z| x_0`` for every row of ``z``.

    ``z`` is ``(m, n)`` (or ``(n,)``), ``a`` is ``(m,)`` (or scalar); the result
    has shape ``x.shape[:-1] + (m,)``.
    """
    sc = _sqrt_c(k)
    z2 = ad.reshape(z, (-1, ad.no_grad_data(z).shape[-1]))
    a1 = ad.reshape(a, (-1,))
    if ad.no_grad_data(x).shape[-1] - 1 != ad.no_grad_data(z2).shape[-1]:
        raise DimensionError("hyperplane dimension does not match the input point")
    sa = ad.mul(sc, a1)
    proj = ad.matmul(space(x), ad.swapaxes(z2, 0, 1))
    return ad.sub(ad.mul(ad.cosh(sa), proj), ad.mul(ad.mul(ad.sinh(sa), _row_norms(z2)), time(x)))


def point_hyperplane_distance(x, z, a, k=DEFAULT_K):
    """Unsigned distance from ``x`` to the Lorentz hyperplane with parameters ``(z, a)``."""
    _check_rows(z)
    sc = _sqrt_c(k)
    num = hyperplane_numerator(x, z, a, k)
    zn = _row_norms(ad.reshape(z, (-1, ad.no_grad_data(z).shape[-1])))
    d = ad.mul(1.0 / sc, ad.abs(ad.asinh(ad.mul(sc, ad.div(num, zn)))))
    return d if np.ndim(ad.no_grad_data(z)) == 2 else ad.getitem(d, (Ellipsis, 0))


def mlr_logits(x, z, a, k=DEFAULT_K):
    """Margin-weighted signed distances to the class hyperplanes.

    ``v = sign(num) |z| |asinh(sqrt(-K) num / |z|)| / sqrt(-K)``. asinh is odd,
    so this equals ``|z| asinh(sqrt(-K) num / |z|) / sqrt(-K)``, which is the
    form evaluated here: it has no kink at ``num = 0``.
    """
    _check_rows(z)
    sc = _sqrt_c(k)
    num = hyperplane_numerator(x, z, a, k)
    zn = _row_norms(ad.reshape(z, (-1, ad.no_grad_data(z).shape[-1])))
    return ad.mul(ad.div(zn, sc), ad.asinh(ad.mul(sc, ad.div(num, zn))))


def coordinate_distances(y, k=DEFAULT_K):
    """Signed distances from ``y`` to the coordinate hyperplanes ``y_k = 0``."""
    sc = _sqrt_c(k)
    return ad.mul(1.0 / sc, ad.asinh(ad.mul(sc, space(y))))


def plfc_forward(x, z, a, bias=None, k=DEFAULT_K):
    """Point-to-hyperplane fully connected map ``L^n -> L^m``.

    The logits become spatial coordinates ``sinh(sqrt(-K) v)/sqrt(-K)``, so
    the signed distance of the output to the k-th coordinate hyperplane is
    exactly ``v_k``. An optional bias point is gyro-added afterwards.
    """
    sc = _sqrt_c(k)
    v = mlr_logits(x, z, a, k)
    y = lift_space(ad.mul(1.0 / sc, ad.sinh(ad.mul(sc, v))), k)
    if bias is not None:
        y = gyro_add(y, bias, k)
    return y


def lfc_head_forward(u, k=DEFAULT_K):
    """Extrinsic head: ``u`` becomes the spatial part directly.

    Returns the output point and its coordinate-hyperplane distance logits
    ``asinh(sqrt(-K) u)/sqrt(-K)``.
    """
    if not np.all(np.isfinite(ad.no_grad_data(u))):
        raise ConfigurationError("lfc head input must be finite")
    y = lift_space(u, k)
    return y, coordinate_distances(y, k)


def log_radius_scale(n, n_i):
    """``exp((digamma(n/2) - digamma(n_i/2)) / 2)``."""
    if not (int(n) >= int(n_i) >= 1):
        raise ConfigurationError(f"need n >= n_i >= 1, got n={n}, n_i={n_i}")
    return float(np.exp(0.5 * (digamma(n / 2.0) - digamma(n_i / 2.0))))


def log_cat(blocks, k=DEFAULT_K):
    """Concatenate ``N`` points of ``L^d`` (axis -2) into one point of ``L^(N d)``.

    Spatial blocks are divided by ``log_radius_scale(N d, d)``: for Gaussian
    blocks this keeps the expected log spatial radius of the output equal to
    that of a single block, whatever ``N``. One time coordinate is recomputed
    from the block times, ``sqrt(-1/K + w^2 sum(t_i^2 + 1/K))`` with ``w`` the
    applied factor.
    """
    k = check_curvature(k)
    shape = ad.no_grad_data(blocks).shape
    if len(shape) < 2:
        raise DimensionError("log_cat expects blocks stacked on axis -2")
    n_blocks, d = shape[-2], shape[-1] - 1
    w = 1.0 / log_radius_scale(n_blocks * d, d)
    t = time(blocks)
    radicand = ad.add(-1.0 / k, ad.mul(w * w, ad.sum(ad.add(ad.square(t), 1.0 / k), axis=-2)))
    if np.any(ad.no_grad_data(radicand) < 0):
        raise NumericDomainError("log_cat: negative time radicand (inputs off the manifold)")
    t_out = ad.sqrt(radicand)
    u = ad.reshape(ad.mul(w, space(blocks)), shape[:-2] + (n_blocks * d,))
    return ad.concatenate([t_out, u], axis=-1)


def _pair(v):
    return (int(v), int(v)) if np.isscalar(v) else (int(v[0]), int(v[1]))


def _window_index(h, w, kernel, stride, padding):
    """Row-major gather indices into a flattened ``h*w`` grid; ``h*w`` marks padding."""
    kh, kw = kernel
    sh, sw = stride
    ho = (h + 2 * padding - kh) // sh + 1
    wo = (w + 2 * padding - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ConfigurationError("kernel does not fit the padded input")
    rows = np.arange(ho)[:, None] * sh + np.arange(kh)[None, :] - padding  # (ho, kh)
    cols = np.arange(wo)[:, None] * sw + np.arange(kw)[None, :] - padding  # (wo, kw)
    r = rows[:, None, :, None]
    c = cols[None, :, None, :]
    inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    idx = np.where(inside, r * w + c, h * w)
    return idx.reshape(ho, wo, kh * kw), ho, wo


def _gather_windows(fmap, kernel, stride, padding, k):
    """``(B, H, W, C)`` -> ``(B, Ho, Wo, kh*kw, C)``; padded cells read the origin."""
    data = ad.no_grad_data(fmap)
    if data.ndim != 4:
        raise DimensionError("feature maps must have shape (batch, height, width, 1+channels)")
    b, h, w, ch = data.shape
    idx, ho, wo = _window_index(h, w, _pair(kernel), _pair(stride), int(padding))
    flat = ad.reshape(fmap, (b, h * w, ch))
    if padding > 0:
        pad = np.broadcast_to(origin(k, ch - 1), (b, 1, ch))
        flat = ad.concatenate([flat, pad], axis=1)
    return ad.getitem(flat, (slice(None), idx))


def lorentz_conv(fmap, z, a, kernel, stride=1, padding=0, bias=None, k=DEFAULT_K):
    """Convolution = PLFC of the log-radius concatenation of each receptive field."""
    kh, kw = _pair(kernel)
    d = ad.no_grad_data(fmap).shape[-1] - 1
    if ad.no_grad_data(z).shape[-1] != kh * kw * d:
        raise ConfigurationError(
            f"hyperplane input dimension {ad.no_grad_data(z).shape[-1]} != kernel area x channels {kh * kw * d}")
    patches = _gather_windows(fmap, (kh, kw), stride, padding, k)
    return plfc_forward(log_cat(patches, k), z, a, bias, k)


def lorentz_avg_pool(fmap, window, stride=None, k=DEFAULT_K):
    """Lorentzian centroid of every pooling window."""
    stride = window if stride is None else stride
    patches = _gather_windows(fmap, window, stride, 0, k)
    return lorentzian_centroid(patches, k=k, axis=-2)


def lorentz_relu(x, k=DEFAULT_K):
    return lift_space(ad.relu(space(x)), k)


def lorentz_dropout(x, p, training, rng=None, k=DEFAULT_K, mask=None):
    """Mask-and-project dropout on spatial coordinates; identity at evaluation.

    Survivors are rescaled by ``1/(1-p)`` before the time coordinate is
    recomputed. ``mask`` overrides the Bernoulli draw (for tests).
    """
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or (p == 0.0 and mask is None):
        return x
    shape = ad.no_grad_data(x).shape[:-1] + (ad.no_grad_data(x).shape[-1] - 1,)
    if mask is None:
        mask = rng.random(shape) >= p
    keep = np.asarray(mask, dtype=np.float64) / (1.0 - p)
    return project_to_hyperboloid(ad.concatenate([time(x), ad.mul(space(x), keep)], axis=-1), k)


# -- parameterised layers --------------------------------------------------------


@dataclass
class HyperplaneParams:
    """Per-output-unit orientations ``z`` (rows) and offsets ``a``."""

    z: ad.Tensor
    a: ad.Tensor

    @classmethod
    def init(cls, out_dim, in_dim, rng, name=""):
        z = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))
        return cls(ad.Tensor(z, requires_grad=True, name=f"{name}z"),
                   ad.Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}a"))

    def guard(self):
        """Lift rows of ``z`` whose norm fell below the floor back onto it."""
        z = self.z.data
        zn = np.linalg.norm(z, axis=-1)
        for i in np.flatnonzero(zn < ZNORM_FLOOR):
            if zn[i] > 0:
                z[i] *= ZNORM_FLOOR / zn[i]
            else:
                z[i, 0] = ZNORM_FLOOR


class PLFC:
    def __init__(self, in_dim, out_dim, rng, k=DEFAULT_K, bias=True, name="plfc"):
        self.k = k
        self.params = HyperplaneParams.init(out_dim, in_dim, rng, name=f"{name}.")
        self.bias = ad.Tensor(origin(k, out_dim), requires_grad=True, name=f"{name}.bias") if bias else None

    def __call__(self, x, training=False):
        return plfc_forward(x, self.params.z, self.params.a, self.bias, self.k)

    def parameters(self):
        out = {"z": self.params.z, "a": self.params.a}
        if self.bias is not None:
            out["bias"] = self.bias
        return out


class MLRHead:
    """Lorentz multinomial logistic regression logits."""

    def __init__(self, in_dim, classes, rng, k=DEFAULT_K, name="head"):
        self.k = k
        self.params = HyperplaneParams.init(classes, in_dim, rng, name=f"{name}.")

    def __call__(self, x, training=False):
        return mlr_logits(x, self.params.z, self.params.a, self.k)

    def parameters(self):
        return {"z": self.params.z, "a": self.params.a}


class LFCHead:
    """Extrinsic baseline head: ``u = W x + b`` on ambient coordinates, logits asinh(u)."""

    def __init__(self, in_dim, classes, rng, k=DEFAULT_K, name="head"):
        self.k = k
        self.w = ad.Tensor(rng.normal(0.0, 1.0 / np.sqrt(in_dim + 1), size=(classes, in_dim + 1)),
                           requires_grad=True, name=f"{name}.w")
        self.b = ad.Tensor(np.zeros(classes), requires_grad=True, name=f"{name}.b")

    def __call__(self, x, training=False):
        u = ad.add(ad.matmul(x, ad.swapaxes(self.w, 0, 1)), self.b)
        return lfc_head_forward(u, self.k)[1]

    def parameters(self):
        return {"w": self.w, "b": self.b}


class LorentzConv2d:
    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, padding=0,
                 k=DEFAULT_K, bias=True, name="conv"):
        self.k = k
        self.kernel = _pair(kernel)
        self.stride = stride
        self.padding = padding
        fan_in = self.kernel[0] * self.kernel[1] * in_channels
        self.params = HyperplaneParams.init(out_channels, fan_in, rng, name=f"{name}.")
        self.bias = ad.Tensor(origin(k, out_channels), requires_grad=True, name=f"{name}.bias") if bias else None

    def __call__(self, x, training=False):
        return lorentz_conv(x, self.params.z, self.params.a, self.kernel, self.stride,
                            self.padding, self.bias, self.k)

    def parameters(self):
        out = {"z": self.params.z, "a": self.params.a}
        if self.bias is not None:
            out["bias"] = self.bias
        return out
