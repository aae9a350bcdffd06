"""Gyrovector operations on the Lorentz model, built from exp/log/transport."""

from . import autodiff as ad
from .lorentz import (
    DEFAULT_K,
    check_curvature,
    exp_map,
    exp_origin,
    log_origin,
    space,
    time,
    transport_from_origin,
    _check_same_dim,
)


def gyro_add(x, y, k=DEFAULT_K):
    """Left gyroaddition ``exp_x(PT_{o->x}(log_o(y)))``."""
    check_curvature(k)
    _check_same_dim(x, y)
    v = transport_from_origin(x, log_origin(y, k), k)
    return exp_map(x, v, k, check=False)


def gyro_scale(t, x, k=DEFAULT_K):
    """Gyro scalar multiplication ``exp_o(t log_o(x))``.

    ``t`` may be a scalar or an array/Tensor broadcastable against the
    leading axes of ``x`` with a trailing singleton axis.
    """
    return exp_origin(ad.mul(t, log_origin(x, k)), k)


def gyro_inverse(x):
    """``[x0, -x_s]``, the closed form of ``(-1) (.) x``."""
    return ad.concatenate([time(x), ad.neg(space(x))], axis=-1)


def gyro_translate(mu, x, k=DEFAULT_K):
    """Left gyrotranslation ``(-mu) (+) x``; an isometry sending ``mu`` to the origin."""
    return gyro_add(gyro_inverse(mu), x, k)
