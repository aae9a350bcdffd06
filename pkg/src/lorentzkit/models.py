"""Network presets assembled from the Lorentz layers."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .data import embed_input
from .errors import ConfigurationError
from .layers import (
    PLFC,
    LFCHead,
    LorentzConv2d,
    MLRHead,
    lorentz_avg_pool,
    lorentz_dropout,
    lorentz_relu,
)
from .normstats import GyroLBN

GAMMA_FLOOR = 1e-6


def parse_norm(norm):
    """``"gyrolbn"`` -> closed form, ``"gyrobn-iterN"``/``"gyrobn-converge"`` -> Karcher, ``"none"``."""
    if norm == "none":
        return False, None
    if norm == "gyrolbn":
        return True, None
    if norm == "gyrobn-converge":
        return True, "converge"
    if norm.startswith("gyrobn-iter"):
        try:
            iters = int(norm[len("gyrobn-iter"):])
        except ValueError:
            iters = 0
        if iters >= 1:
            return True, iters
    raise ConfigurationError(f"unknown norm {norm!r} (gyrolbn, gyrobn-iterN, gyrobn-converge, none)")


class LorentzNet:
    """Embedding, a stack of Lorentz blocks and a classification head.

    ``preset="mlp"``: each block is PLFC -> norm -> ReLU -> dropout on
    feature vectors. ``preset="cnn"``: features are square images (row-major,
    ``image_channels`` values per pixel); each block is a 3x3 convolution with
    padding 1 -> norm -> ReLU -> dropout, followed by a global centroid pool.
    """

    def __init__(self, in_dim, classes, rng, *, preset="mlp", head="plfc", norm="gyrolbn",
                 hidden_dim=32, num_layers=2, dropout=0.0, k=-1.0, image_channels=1,
                 momentum=0.1, track_running=True):
        if preset not in ("mlp", "cnn"):
            raise ConfigurationError(f"unknown preset {preset!r}")
        if head not in ("plfc", "lfc"):
            raise ConfigurationError(f"unknown head {head!r}")
        if num_layers < 1 or hidden_dim < 1:
            raise ConfigurationError("num_layers and hidden_dim must be positive")
        use_norm, iters = parse_norm(norm)
        self.preset, self.k, self.dropout = preset, k, dropout
        self.in_dim, self.classes = in_dim, classes
        self.blocks, self.norms = [], []
        if preset == "cnn":
            if in_dim % image_channels:
                raise ConfigurationError("feature count is not divisible by image_channels")
            side = int(round(np.sqrt(in_dim // image_channels)))
            if side * side * image_channels != in_dim:
                raise ConfigurationError("cnn preset needs square images")
            self.image_shape = (side, side, image_channels)
        width = image_channels if preset == "cnn" else in_dim
        for i in range(num_layers):
            name = f"block{i}"
            if preset == "cnn":
                layer = LorentzConv2d(width, hidden_dim, 3, rng, padding=1, k=k, name=name)
            else:
                layer = PLFC(width, hidden_dim, rng, k=k, name=name)
            self.blocks.append(layer)
            self.norms.append(GyroLBN(hidden_dim, k, momentum=momentum, track_running=track_running,
                                      iters=iters) if use_norm else None)
            width = hidden_dim
        head_cls = MLRHead if head == "plfc" else LFCHead
        self.head = head_cls(width, classes, rng, k=k)

    def embed(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.in_dim:
            raise ConfigurationError(f"expected features of shape (batch, {self.in_dim})")
        if self.preset == "cnn":
            features = features.reshape((len(features),) + self.image_shape)
        return embed_input(features, self.k)

    def penultimate(self, features, training=False, rng=None):
        x = self.embed(features)
        for layer, norm in zip(self.blocks, self.norms):
            x = layer(x, training)
            if norm is not None:
                x = norm(x, training)
            x = lorentz_relu(x, self.k)
            x = lorentz_dropout(x, self.dropout, training, rng, self.k)
        if self.preset == "cnn":
            b, h, w, ch = ad.no_grad_data(x).shape
            x = ad.reshape(lorentz_avg_pool(x, (h, w), k=self.k), (b, ch))
        return x

    def __call__(self, features, training=False, rng=None):
        return self.head(self.penultimate(features, training, rng), training)

    def named_parameters(self):
        """Ordered ``name -> (tensor, kind)`` where kind is weight, flat or lorentz."""
        out = {}
        for i, (layer, norm) in enumerate(zip(self.blocks, self.norms)):
            for pname, t in layer.parameters().items():
                out[f"block{i}.{pname}"] = (t, "lorentz" if pname == "bias" else
                                            "weight" if pname == "z" else "flat")
            if norm is not None:
                out[f"norm{i}.gamma"] = (norm.state.gamma, "flat")
                out[f"norm{i}.beta"] = (norm.state.beta, "lorentz")
        for pname, t in self.head.parameters().items():
            out[f"head.{pname}"] = (t, "weight" if pname in ("z", "w") else "flat")
        return out

    def after_step(self):
        """Keep hyperplane orientations away from zero and scales positive."""
        for layer in self.blocks:
            layer.params.guard()
        if isinstance(self.head, MLRHead):
            self.head.params.guard()
        for norm in self.norms:
            if norm is not None:
                norm.state.gamma.data = np.maximum(norm.state.gamma.data, GAMMA_FLOOR)

    def state_arrays(self):
        """Every learnable tensor plus running statistics, keyed for checkpointing."""
        out = {name: t.data for name, (t, _) in self.named_parameters().items()}
        for i, norm in enumerate(self.norms):
            if norm is not None:
                s = norm.state
                out[f"norm{i}.running_mean"] = s.running_mean
                out[f"norm{i}.running_var"] = np.array(s.running_var)
                out[f"norm{i}.num_updates"] = np.array(float(s.num_updates))
        return out

    def load_state_arrays(self, arrays):
        params = self.named_parameters()
        for name, (t, _) in params.items():
            if name not in arrays:
                raise ConfigurationError(f"checkpoint lacks parameter {name!r}")
            if arrays[name].shape != t.data.shape:
                raise ConfigurationError(f"checkpoint shape mismatch for {name!r}")
            t.data = np.array(arrays[name], dtype=np.float64)
        for i, norm in enumerate(self.norms):
            if norm is not None:
                s = norm.state
                s.running_mean = np.array(arrays[f"norm{i}.running_mean"])
                s.running_var = float(arrays[f"norm{i}.running_var"])
                s.num_updates = int(arrays[f"norm{i}.num_updates"])


def cross_entropy(logits, labels):
    """Mean of ``logsumexp(logits) - logits[label]`` over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    picked = ad.getitem(logits, (np.arange(len(labels)), labels))
    return ad.mean(ad.sub(ad.logsumexp(logits, axis=-1), picked))
