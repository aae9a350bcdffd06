"""Random draws shared by the test modules."""

import numpy as np

from lorentzkit import autodiff as ad

from lorentzkit.lorentz import exp_origin, lift_space


def random_points(rng, count, n, k=-1.0, scale=1.0):
    """Hyperboloid points with Gaussian spatial parts of standard deviation ``scale``."""
    return lift_space(rng.normal(0.0, scale, size=(count, n)), k)


def random_tangent(rng, x, scale=1.0, max_norm=None):
    """Gaussian ambient vectors projected onto the tangent space at ``x``.

    With ``max_norm`` the Minkowski norms are redrawn uniformly in ``[0, max_norm]``.
    """
    h = rng.normal(0.0, scale, size=np.shape(x))
    inner = -x[..., :1] * h[..., :1] + np.sum(x[..., 1:] * h[..., 1:], axis=-1, keepdims=True)
    # project with respect to the hyperboloid's normal: v = h + <x,h>_L x / (-<x,x>_L)
    norm2 = x[..., :1] ** 2 - np.sum(x[..., 1:] ** 2, axis=-1, keepdims=True)
    v = h + inner / norm2 * x
    if max_norm is not None:
        vn = np.sqrt(np.maximum(-v[..., :1] ** 2 + np.sum(v[..., 1:] ** 2, axis=-1, keepdims=True), 1e-300))
        v = v / vn * rng.uniform(0.0, max_norm, size=vn.shape)
    return v


def origin_tangent(rng, count, n, scale=1.0):
    return np.concatenate([np.zeros((count, 1)), rng.normal(0.0, scale, size=(count, n))], axis=1)


def points_at_radius(rng, count, n, radius, k=-1.0):
    v = rng.normal(size=(count, n))
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    return exp_origin(np.concatenate([np.zeros((count, 1)), v], axis=1), k)


def residual(x, k=-1.0):
    x = np.asarray(x)
    return np.abs(k * (-x[..., 0] ** 2 + np.sum(x[..., 1:] ** 2, axis=-1)) - 1.0)


# -- gradient-check cases shared by the layer tests and the acceptance suite ---------
#
# Each case draws a scalar function of named real arrays. Manifold-valued inputs
# (points, biases, beta) are parametrised by their spatial parts and lifted
# inside the function, so finite differences never leave the hyperboloid.


def _readout(rng, shape):
    r = rng.normal(size=shape)
    return lambda out: ad.sum(ad.mul(out, r))


def _mlr_case(rng):
    from lorentzkit.layers import mlr_logits

    n, m = 3, 4
    params = {"x": rng.normal(size=(5, n)), "z": rng.normal(size=(m, n)), "a": rng.normal(size=m)}
    read = _readout(rng, (5, m))
    return lambda p: read(mlr_logits(lift_space(p["x"]), p["z"], p["a"])), params


def _plfc_case(rng):
    from lorentzkit.layers import plfc_forward

    n, m = 3, 4
    params = {"x": rng.normal(size=(5, n)), "z": rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, n)),
              "a": rng.normal(0.0, 0.5, size=m), "bias": rng.normal(0.0, 0.5, size=m)}
    read = _readout(rng, (5, m + 1))
    return lambda p: read(plfc_forward(lift_space(p["x"]), p["z"], p["a"], lift_space(p["bias"]))), params


def _lfc_case(rng):
    from lorentzkit.layers import lfc_head_forward

    n, m = 3, 4
    params = {"x": rng.normal(size=(5, n)), "w": rng.normal(0.0, 0.5, size=(m, n + 1)), "b": rng.normal(size=m)}
    read = _readout(rng, (5, m))

    def f(p):
        u = ad.add(ad.matmul(lift_space(p["x"]), ad.swapaxes(p["w"], 0, 1)), p["b"])
        return read(lfc_head_forward(u)[1])

    return f, params


def _log_cat_case(rng):
    from lorentzkit.layers import log_cat

    params = {"blocks": rng.normal(size=(4, 3, 2))}
    read = _readout(rng, (4, 7))
    return lambda p: read(log_cat(lift_space(p["blocks"]))), params


def _conv_case(rng):
    from lorentzkit.layers import lorentz_conv

    d, m = 2, 3
    params = {"fmap": rng.normal(size=(1, 3, 3, d)), "z": rng.normal(0.0, 0.5, size=(m, 4 * d)),
              "a": rng.normal(0.0, 0.5, size=m), "bias": rng.normal(0.0, 0.5, size=m)}
    read = _readout(rng, (1, 4, 4, m + 1))

    def f(p):
        out = lorentz_conv(lift_space(p["fmap"]), p["z"], p["a"], 2, 1, 1, lift_space(p["bias"]))
        return read(out)

    return f, params


def _pool_case(rng):
    from lorentzkit.layers import lorentz_avg_pool

    params = {"fmap": rng.normal(size=(2, 4, 4, 3))}
    read = _readout(rng, (2, 2, 2, 4))
    return lambda p: read(lorentz_avg_pool(lift_space(p["fmap"]), 2)), params


def _relu_case(rng):
    from lorentzkit.layers import lorentz_relu

    x = rng.normal(size=(6, 4))
    # keep every coordinate well away from the kink at zero
    x = np.where(np.abs(x) < 1e-3, 1e-2, x)
    read = _readout(rng, (6, 5))
    return lambda p: read(lorentz_relu(lift_space(p["x"]))), {"x": x}


def _dropout_case(rng):
    from lorentzkit.layers import lorentz_dropout

    mask = rng.random((6, 4)) >= 0.3
    read = _readout(rng, (6, 5))
    return lambda p: read(lorentz_dropout(lift_space(p["x"]), 0.3, True, mask=mask)), {"x": rng.normal(size=(6, 4))}


def _norm_case(forward):
    def case(rng):
        from lorentzkit.normstats import NormState

        n = 3
        params = {"x": rng.normal(size=(8, n)), "gamma": np.array(rng.uniform(0.5, 2.0)),
                  "beta": rng.normal(0.0, 0.5, size=n)}
        read = _readout(rng, (8, n + 1))

        def f(p):
            state = NormState(n, track_running=False, gamma=p["gamma"], beta=lift_space(p["beta"]))
            return read(forward(lift_space(p["x"]), state))

        return f, params

    return case


def _gyrolbn(x, state):
    from lorentzkit.normstats import gyrolbn_forward

    return gyrolbn_forward(x, state, "train")


def _gyrobn(x, state):
    from lorentzkit.normstats import gyrobn_forward

    return gyrobn_forward(x, state, "train", 2)


GRADIENT_CASES = {
    "mlr_logits": _mlr_case,
    "plfc": _plfc_case,
    "lfc_head": _lfc_case,
    "log_cat": _log_cat_case,
    "lorentz_conv": _conv_case,
    "lorentz_avg_pool": _pool_case,
    "lorentz_relu": _relu_case,
    "lorentz_dropout": _dropout_case,
    "gyrolbn": _norm_case(_gyrolbn),
    "gyrobn_iter2": _norm_case(_gyrobn),
}


def gradient_errors(case, rng, step=1e-5):
    """Relative error ``|g_ad - g_fd| / |g_fd|`` per parameter group for one draw."""
    from oracle import finite_difference_gradient

    f, params = case(rng)
    leaves = {name: ad.Tensor(v, requires_grad=True) for name, v in params.items()}
    with ad.Tape() as tape:
        loss = f(leaves)
    grads = tape.gradient(loss)
    errors = {}
    for name, value in params.items():
        def partial(v, name=name):
            return float(f({**params, name: v}))

        fd = finite_difference_gradient(partial, value, step)
        g = grads.get(leaves[name], np.zeros_like(value))
        errors[name] = float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-6))
    return errors


# -- deep random pipelines for manifold-preservation checks ----------------------------


def _init_plfc(rng, n, m):
    z = rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, n))
    return z, rng.normal(0.0, 0.3, size=m), random_points(rng, 1, m, scale=0.3)[0]


def deep_pipeline(rng, x, n=6, channels=4):
    """Run a random stack of every manifold-valued layer on ``x`` of shape ``(16 B, 1 + n)``.

    Yields ``(stage name, output points)`` after each stage, including the
    lorentz-parameter updates of one optimizer step. Parameters are drawn at
    initialization scale, so points stay within moderate geodesic radii.
    """
    from lorentzkit.layers import (lorentz_avg_pool, lorentz_conv, lorentz_dropout, lorentz_relu,
                                   plfc_forward)
    from lorentzkit.normstats import NormState, gyrobn_forward, gyrolbn_forward
    from lorentzkit.optim import ParamGroup, rsgd_step

    states = []
    for depth in range(2):
        z, a, bias = _init_plfc(rng, n, n)
        x = plfc_forward(x, z, a, bias)
        yield f"plfc{depth}", x
        state = NormState(n, track_running=False, gamma=np.array(rng.uniform(0.5, 2.0)),
                          beta=random_points(rng, 1, n, scale=0.3)[0])
        states.append(state)
        x = gyrolbn_forward(x, state, "train") if depth == 0 else gyrobn_forward(x, state, "train", 2)
        yield ("gyrolbn", "gyrobn")[depth], x
        x = lorentz_relu(x)
        yield f"relu{depth}", x
        x = lorentz_dropout(x, 0.2, True, rng)
        yield f"dropout{depth}", x
    fmap = x.reshape(-1, 4, 4, n + 1)
    z, a, bias = _init_plfc(rng, 9 * n, channels)
    fmap = lorentz_conv(fmap, z, a, 3, padding=1, bias=bias)
    yield "conv", fmap
    fmap = lorentz_avg_pool(fmap, 2)
    yield "pool", fmap
    # one Riemannian step on every manifold-valued parameter drawn above
    params = {"bias": ad.Tensor(bias), **{f"beta{i}": ad.Tensor(s.beta) for i, s in enumerate(states)}}
    grads = {p: rng.normal(size=p.shape) for p in params.values()}
    rsgd_step(ParamGroup(params, kind="lorentz", lr=0.05), grads)
    for name, p in params.items():
        yield f"rsgd_{name}", p.data
