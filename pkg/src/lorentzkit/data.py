"""Datasets: synthetic hierarchies and on-disk loading."""

from __future__ import annotations

import csv
import itertools
import os
from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import ConfigurationError
from .lorentz import DEFAULT_K, exp_origin


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ConfigurationError("features must be (samples, dim) with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise ConfigurationError("dataset contains non-finite features")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ConfigurationError("labels outside [0, class_count)")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]


def hierarchy_prototypes(depth, branching, dim, rng):
    """Sum of Gaussian node directions along every root-to-leaf path (row-major leaves)."""
    protos = []
    directions = {}
    for path in itertools.product(range(branching), repeat=depth):
        total = np.zeros(dim)
        for level in range(1, depth + 1):
            node = path[:level]
            if node not in directions:
                directions[node] = rng.normal(0.0, 1.0 / np.sqrt(dim), size=dim)
            total = total + directions[node]
        protos.append(total)
    return np.array(protos)


def gen_synthetic_hierarchy(depth=2, branching=3, dim=16, samples_per_leaf=50, noise=0.1, seed=0):
    """Balanced ``branching``-ary tree of ``depth`` levels; one class per leaf.

    Returns ``(train, test)`` from a stratified 80/20 split. Node directions
    are drawn in breadth-first-by-path order, so the result depends only on
    the arguments.
    """
    if depth < 2 or branching < 2:
        raise ConfigurationError("depth and branching must both be >= 2")
    rng = np.random.default_rng(seed)
    protos = hierarchy_prototypes(depth, branching, dim, rng)
    classes = len(protos)
    n_train = int(round(0.8 * samples_per_leaf))
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for label, proto in enumerate(protos):
        pts = proto + noise * rng.normal(size=(samples_per_leaf, dim))
        order = rng.permutation(samples_per_leaf)
        tr_x.append(pts[order[:n_train]])
        te_x.append(pts[order[n_train:]])
        tr_y += [label] * n_train
        te_y += [label] * (samples_per_leaf - n_train)
    train = Dataset(np.concatenate(tr_x), np.array(tr_y), classes, "train")
    test = Dataset(np.concatenate(te_x), np.array(te_y), classes, "test")
    return train, test


def embed_input(features, k=DEFAULT_K):
    """Lift Euclidean features onto the hyperboloid via ``exp_o((0, features))``."""
    features = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise ConfigurationError("features must be finite")
    tangent = np.concatenate([np.zeros(features.shape[:-1] + (1,)), features], axis=-1)
    return exp_origin(tangent, k)


def save_dataset(directory, train, test, fmt="binary"):
    os.makedirs(directory, exist_ok=True)
    for ds in (train, test):
        if fmt == "binary":
            fileio.write_tensor(os.path.join(directory, f"{ds.split}.ilnn"), ds.features)
            fileio.write_labels(os.path.join(directory, f"{ds.split}.labels"), ds.labels)
        elif fmt == "csv":
            write_csv(os.path.join(directory, f"{ds.split}.csv"), ds)
        else:
            raise ConfigurationError(f"unknown dataset format {fmt!r}")
    with open(os.path.join(directory, "meta.txt"), "w") as fh:
        fh.write(f"class_count={train.class_count}\ndim={train.dim}\n")


def write_csv(path, ds):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{i}" for i in range(ds.dim)])
        for y, row in zip(ds.labels, ds.features):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "label":
        raise ConfigurationError(f"{path}: CSV header must start with 'label'")
    body = np.array(rows[1:], dtype=np.float64).reshape(-1, len(rows[0]))
    return body[:, 1:], body[:, 0].astype(np.int64)


def load_dataset(path, split="train", class_count=None):
    """Load ``split`` from a dataset directory, or a single ``.ilnn``/``.csv`` file."""
    path = os.fspath(path)
    if os.path.isdir(path):
        meta_path = os.path.join(path, "meta.txt")
        if class_count is None and os.path.exists(meta_path):
            with open(meta_path) as fh:
                meta = fileio.parse_key_values(fh.read(), meta_path)
            class_count = int(meta["class_count"])
        binary = os.path.join(path, f"{split}.ilnn")
        if os.path.exists(binary):
            features = fileio.read_tensor(binary)
            labels = fileio.read_labels(os.path.join(path, f"{split}.labels"))
        elif os.path.exists(os.path.join(path, f"{split}.csv")):
            features, labels = read_csv(os.path.join(path, f"{split}.csv"))
        else:
            raise ConfigurationError(f"no {split} split found in {path}")
    elif path.endswith(".csv"):
        features, labels = read_csv(path)
    elif path.endswith(".ilnn"):
        features = fileio.read_tensor(path)
        labels = fileio.read_labels(path[: -len(".ilnn")] + ".labels")
    else:
        raise ConfigurationError(f"cannot read dataset at {path!r}")
    if features.ndim != 2:
        raise ConfigurationError("dataset tensor must be rank 2")
    if class_count is None:
        class_count = int(labels.max()) + 1 if len(labels) else 0
    return Dataset(features, labels, class_count, split)
