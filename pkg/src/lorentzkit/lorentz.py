"""Closed-form primitives of the Lorentz (hyperboloid) model.

Points are arrays whose last axis holds ``(x0, x_1, ..., x_n)``: the time
coordinate followed by the space coordinates. Leading axes are batch axes and
broadcast. The curvature ``k`` is a negative float (default ``-1``).

All functions accept numpy arrays or :class:`~lorentzkit.autodiff.Tensor`
values and differentiate through the tape when given tracked tensors.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    NumericDomainError,
    NumericError,
)

DEFAULT_K = -1.0
ACOSH_WINDOW = ad.ACOSH_WINDOW
TANGENT_TOL = 1e-6
PT_DENOM_FLOOR = 1e-12


def check_curvature(k):
    k = float(k)
    if not np.isfinite(k) or k >= 0:
        raise ConfigurationError(f"curvature must be a finite negative number, got {k}")
    return k


def _sqrt_c(k):
    return float(np.sqrt(-check_curvature(k)))


def time(x):
    return ad.getitem(x, (Ellipsis, slice(0, 1)))


def space(x):
    return ad.getitem(x, (Ellipsis, slice(1, None)))


def _check_finite(x, what):
    if not np.all(np.isfinite(ad.no_grad_data(x))):
        raise NumericError(f"{what}: non-finite input")


def _check_same_dim(*arrays):
    dims = {ad.no_grad_data(a).shape[-1] if np.ndim(ad.no_grad_data(a)) else 0 for a in arrays}
    if len(dims) != 1:
        raise DimensionError(f"ambient dimensions differ: {sorted(dims)}")
    (d,) = dims
    if d < 2:
        raise DimensionError(f"ambient dimension must be >= 2, got {d}")


def minkowski_inner(u, v, keepdims=False):
    """-u0*v0 + sum_i ui*vi over the last axis."""
    _check_same_dim(u, v)
    prod = ad.mul(u, v)
    out = ad.sub(ad.sum(space(prod), axis=-1, keepdims=True), time(prod))
    return out if keepdims else ad.getitem(out, (Ellipsis, 0))


def minkowski_sq_norm(v, keepdims=False):
    return minkowski_inner(v, v, keepdims=keepdims)


def constraint_residual(x, k=DEFAULT_K):
    """``|K <x,x>_L - 1|``, the relative distance from the hyperboloid."""
    x = ad.no_grad_data(x)
    return np.abs(check_curvature(k) * minkowski_inner(x, x) - 1.0)


def is_on_manifold(x, k=DEFAULT_K, tol=1e-9):
    x = ad.no_grad_data(x)
    return bool(np.all(constraint_residual(x, k) <= tol) and np.all(x[..., 0] > 0))


def origin(k=DEFAULT_K, n=2):
    """The pole ``((-K)^(-1/2), 0, ..., 0)`` of the hyperboloid of dimension ``n``."""
    if int(n) < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    out = np.zeros(int(n) + 1)
    out[0] = 1.0 / _sqrt_c(k)
    return out


def lift_space(s, k=DEFAULT_K):
    """Complete spatial coordinates with the time coordinate sqrt(1/(-K) + |s|^2)."""
    _check_finite(s, "lift_space")
    c = -check_curvature(k)
    t = ad.sqrt(ad.add(ad.sum(ad.square(s), axis=-1, keepdims=True), 1.0 / c))
    return ad.concatenate([t, s], axis=-1)


def project_to_hyperboloid(x, k=DEFAULT_K):
    """Discard the time entry and recompute it from the spatial entries."""
    _check_finite(x, "project_to_hyperboloid")
    return lift_space(space(x), k)


def lorentz_sq_chord(x, y, k=DEFAULT_K):
    """Squared Lorentzian distance ``2/K - 2<x,y>_L``."""
    k = check_curvature(k)
    return ad.sub(2.0 / k, ad.mul(2.0, minkowski_inner(x, y)))


def _acosh_arg_check(arg, x, y, k):
    arg = ad.no_grad_data(arg)
    if np.any(np.isnan(arg)):
        raise NumericDomainError("geodesic distance: NaN argument")
    # rounding in <x,y>_L grows with the size of the time coordinates
    scale = np.maximum(1.0, -k * np.abs(ad.no_grad_data(x)[..., 0] * ad.no_grad_data(y)[..., 0]))
    if np.any(arg < 1.0 - ACOSH_WINDOW * scale):
        raise NumericDomainError(f"acosh argument {np.min(arg)!r} below 1")


def geodesic_dist(x, y, k=DEFAULT_K):
    """Geodesic distance ``acosh(K<x,y>_L)/sqrt(-K)``.

    Evaluated through the equivalent ``2 asinh(sqrt(-K) |x-y|_L / 2)/sqrt(-K)``,
    which stays accurate for nearby points where acosh loses half its digits.
    """
    k = check_curvature(k)
    _check_same_dim(x, y)
    _acosh_arg_check(k * ad.no_grad_data(minkowski_inner(x, y)), x, y, k)
    c = -k
    chord2 = ad.clamp_min(minkowski_sq_norm(ad.sub(x, y)), 0.0)
    return ad.mul(2.0 / np.sqrt(c), ad.asinh(ad.mul(0.5 * np.sqrt(c), ad.sqrt(chord2))))


def _check_tangent(x, v):
    xd, vd = ad.no_grad_data(x), ad.no_grad_data(v)
    resid = np.abs(minkowski_inner(xd, vd))
    scale = np.maximum(1.0, np.linalg.norm(xd, axis=-1) * np.linalg.norm(vd, axis=-1))
    if np.any(resid > TANGENT_TOL * scale):
        raise ContractError(f"vector is not tangent at its base point (residual {resid.max():.3g})")


def exp_map(x, v, k=DEFAULT_K, check=True):
    """``cosh(a) x + sinh(a) v / a`` with ``a = sqrt(-K) |v|_L``."""
    k = check_curvature(k)
    _check_same_dim(x, v)
    if check:
        _check_tangent(x, v)
    cs = ad.mul(-k, minkowski_sq_norm(v, keepdims=True))
    return ad.add(ad.mul(ad.cosh_sqrt(cs), x), ad.mul(ad.sinhc_sq(cs), v))


def exp_origin(v, k=DEFAULT_K):
    """Exponential map at the origin; only the spatial part of ``v`` is read."""
    c = -check_curvature(k)
    vs = space(v)
    cs = ad.mul(c, ad.sum(ad.square(vs), axis=-1, keepdims=True))
    t = ad.mul(1.0 / np.sqrt(c), ad.cosh_sqrt(cs))
    return ad.concatenate([t, ad.mul(ad.sinhc_sq(cs), vs)], axis=-1)


def log_origin(y, k=DEFAULT_K):
    """Logarithmic map at the origin; the result has zero time component."""
    c = -check_curvature(k)
    ys = space(y)
    cs = ad.mul(c, ad.sum(ad.square(ys), axis=-1, keepdims=True))
    out = ad.mul(ad.asinhc_sq(cs), ys)
    return ad.concatenate([ad.mul(0.0, time(y)), out], axis=-1)


def _is_origin(x, k):
    xd = ad.no_grad_data(x)
    return xd.ndim == 1 and np.all(xd[1:] == 0.0) and np.isclose(xd[0], 1.0 / np.sqrt(-k), rtol=0, atol=1e-15)


def log_map(x, y, k=DEFAULT_K):
    """Inverse of :func:`exp_map`: the tangent vector at ``x`` pointing to ``y``.

    Uses ``acosh(b)/sqrt(b^2-1) (y - b x)`` with ``b = K<x,y>_L``, rewritten as
    ``asinh(sqrt(-K)|u|_L)/(sqrt(-K)|u|_L) u`` for ``u = y - b x`` so the factor
    is smooth at ``y = x``.
    """
    k = check_curvature(k)
    _check_same_dim(x, y)
    if _is_origin(x, k):
        return log_origin(y, k)
    beta = ad.mul(k, minkowski_inner(x, y, keepdims=True))
    _acosh_arg_check(ad.no_grad_data(beta)[..., 0], x, y, k)
    u = ad.sub(y, ad.mul(beta, x))
    cs = ad.mul(-k, ad.clamp_min(minkowski_sq_norm(u, keepdims=True), 0.0))
    return ad.mul(ad.asinhc_sq(cs), u)


def parallel_transport(x, y, v, k=DEFAULT_K):
    """Transport ``v`` from ``T_x`` to ``T_y`` along the connecting geodesic."""
    k = check_curvature(k)
    _check_same_dim(x, y, v)
    denom = ad.sub(-1.0 / k, minkowski_inner(x, y, keepdims=True))
    if np.any(np.abs(ad.no_grad_data(denom)) < PT_DENOM_FLOOR):
        raise NumericDomainError("parallel transport: degenerate endpoint pair")
    coef = ad.div(minkowski_inner(y, v, keepdims=True), denom)
    return ad.add(v, ad.mul(coef, ad.add(x, y)))


def transport_from_origin(x, v, k=DEFAULT_K):
    """Parallel transport from the origin to ``x`` (denominator is always >= 2/(-K))."""
    c = -check_curvature(k)
    o = origin(k, ad.no_grad_data(x).shape[-1] - 1)
    denom = ad.add(1.0 / c, ad.mul(1.0 / np.sqrt(c), time(x)))
    coef = ad.div(minkowski_inner(x, v, keepdims=True), denom)
    return ad.add(v, ad.mul(coef, ad.add(x, o)))


def lorentz_to_poincare(x, k=DEFAULT_K):
    """Isometry onto the Poincare ball of radius ``r = 1/sqrt(-K)``: ``r x_s / (x_0 + r)``."""
    r = 1.0 / _sqrt_c(k)
    return ad.div(ad.mul(r, space(x)), ad.add(time(x), r))


def poincare_to_lorentz(u, k=DEFAULT_K):
    c = -check_curvature(k)
    r = 1.0 / np.sqrt(c)
    ud = ad.no_grad_data(u)
    if np.any(np.linalg.norm(ud, axis=-1) >= r):
        raise NumericDomainError("point lies outside the Poincare ball")
    cu2 = ad.mul(c, ad.sum(ad.square(u), axis=-1, keepdims=True))
    denom = ad.sub(1.0, cu2)
    t = ad.mul(r, ad.div(ad.add(1.0, cu2), denom))
    return ad.concatenate([t, ad.div(ad.mul(2.0, u), denom)], axis=-1)


def poincare_dist(u, v, k=DEFAULT_K):
    """Geodesic distance in the Poincare ball (numpy only)."""
    c = -check_curvature(k)
    u, v = np.asarray(u, float), np.asarray(v, float)
    diff = np.sum((u - v) ** 2, axis=-1)
    den = (1 - c * np.sum(u * u, axis=-1)) * (1 - c * np.sum(v * v, axis=-1))
    return np.arccosh(1 + 2 * c * diff / den) / np.sqrt(c)
