"""Training, evaluation, embedding export and the normalization benchmark."""

from __future__ import annotations

import csv
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import fileio
from .config import RunConfig, parse_config_text
from .data import Dataset, load_dataset
from .errors import ConfigurationError, TrainingAborted
from .lorentz import exp_origin, log_origin, lorentz_to_poincare
from .metrics import accuracy, confusion_matrix, mcc
from .models import LorentzNet, cross_entropy
from .normstats import NormState, gyrobn_forward, gyrolbn_forward
from .optim import ParamGroup, RiemannianSGD

METRICS_HEADER = ["epoch", "loss", "train_acc", "test_acc", "test_mcc"]
CHECKPOINT_NAME = "checkpoint.ilnnc"
METRICS_NAME = "metrics.csv"


def build_model(cfg: RunConfig, in_dim, classes):
    rng = np.random.default_rng([cfg.require_seed(), 0])
    return LorentzNet(in_dim, classes, rng, preset=cfg.preset, head=cfg.head, norm=cfg.norm,
                      hidden_dim=cfg.hidden_dim, num_layers=cfg.num_layers, dropout=cfg.dropout_p,
                      k=cfg.curvature, image_channels=cfg.image_channels,
                      momentum=cfg.bn_momentum, track_running=cfg.track_running)


def build_optimizer(cfg: RunConfig, model: LorentzNet):
    weights, flats, points = {}, {}, {}
    for name, (t, kind) in model.named_parameters().items():
        {"weight": weights, "flat": flats, "lorentz": points}[kind][name] = t
    groups = [ParamGroup(weights, "euclidean", cfg.lr, cfg.momentum, cfg.weight_decay),
              ParamGroup(flats, "euclidean", cfg.lr, cfg.momentum, 0.0)]
    if points:
        groups.append(ParamGroup(points, "lorentz", cfg.lorentz_lr, k=cfg.curvature))
    return RiemannianSGD(groups, cfg.drop_epochs(), cfg.lr_drop_gamma)


def predict(model, features, batch_size):
    """Evaluation-mode class predictions and logits, batch by batch."""
    if len(features) == 0:
        raise ConfigurationError("cannot evaluate an empty dataset")
    logits = [ad.no_grad_data(model(features[i:i + batch_size]))
              for i in range(0, len(features), batch_size)]
    logits = np.concatenate(logits)
    return np.argmax(logits, axis=-1), logits


def save_checkpoint(path, cfg: RunConfig, model: LorentzNet, dataset_meta: dict):
    texts = {"config": cfg.to_text(), "config_hash": cfg.config_hash(),
             "dataset": "".join(f"{k}={v}\n" for k, v in dataset_meta.items())}
    fileio.write_checkpoint(path, model.state_arrays(), texts)


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; returns ``(model, config)``."""
    if not os.path.exists(path):
        raise ConfigurationError(f"checkpoint not found: {path}")
    arrays, texts = fileio.read_checkpoint(path)
    cfg = parse_config_text(texts["config"])
    meta = fileio.parse_key_values(texts["dataset"])
    model = build_model(cfg, int(meta["in_dim"]), int(meta["classes"]))
    model.load_state_arrays(arrays)
    return model, cfg


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    checkpoint: str = ""
    metrics_path: str = ""
    model: LorentzNet = None

    @property
    def final(self):
        return self.history[-1] if self.history else None


def _format_row(row):
    return [str(row[0])] + [repr(float(v)) for v in row[1:]]


def train(cfg: RunConfig, out_dir, train_set: Dataset = None, test_set: Dataset = None,
          log=None) -> TrainResult:
    """Run minibatch training and write checkpoint and per-epoch metrics to ``out_dir``.

    A checkpoint is written after every epoch (and once before the first), so
    an abort on a non-finite loss or gradient leaves the last good state.
    """
    seed = cfg.require_seed()
    if train_set is None:
        if not cfg.dataset:
            raise ConfigurationError("no dataset given")
        train_set = load_dataset(cfg.dataset, "train")
        test_set = load_dataset(cfg.dataset, "test", class_count=train_set.class_count)
    if test_set is None:
        test_set = train_set
    if len(train_set) == 0:
        raise ConfigurationError("training set is empty")
    if cfg.epochs < 0 or cfg.batch_size < 1:
        raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(cfg, train_set.dim, train_set.class_count)
    opt = build_optimizer(cfg, model)
    meta = {"in_dim": train_set.dim, "classes": train_set.class_count}
    result = TrainResult(checkpoint=os.path.join(out_dir, CHECKPOINT_NAME),
                         metrics_path=os.path.join(out_dir, METRICS_NAME), model=model)
    save_checkpoint(result.checkpoint, cfg, model, meta)
    shuffle_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2])
    with open(result.metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        fh.flush()
        for epoch in range(cfg.epochs):
            opt.set_epoch(epoch)
            order = shuffle_rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                with ad.Tape() as tape:
                    logits = model(train_set.features[idx], training=True, rng=dropout_rng)
                    loss = cross_entropy(logits, train_set.labels[idx])
                value = float(ad.no_grad_data(loss))
                if not np.isfinite(value):
                    raise TrainingAborted(f"non-finite loss at epoch {epoch}")
                grads = tape.gradient(loss)
                opt.step(grads)
                model.after_step()
                losses.append(value)
            train_pred, _ = predict(model, train_set.features, cfg.batch_size)
            test_pred, _ = predict(model, test_set.features, cfg.batch_size)
            row = (epoch + 1, float(np.mean(losses)), accuracy(train_pred, train_set.labels),
                   accuracy(test_pred, test_set.labels), mcc(test_pred, test_set.labels))
            result.history.append(row)
            writer.writerow(_format_row(row))
            fh.flush()
            save_checkpoint(result.checkpoint, cfg, model, meta)
            if log:
                log(f"epoch {row[0]}: loss={row[1]:.4f} train_acc={row[2]:.4f} "
                    f"test_acc={row[3]:.4f} test_mcc={row[4]:.4f}")
    return result


def read_metrics(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in rows[1:]]


def evaluate(checkpoint, dataset: Dataset, batch_size=None):
    model, cfg = load_checkpoint(checkpoint)
    if dataset.dim != model.in_dim:
        raise ConfigurationError(f"dataset has {dataset.dim} features, model expects {model.in_dim}")
    pred, _ = predict(model, dataset.features, batch_size or cfg.batch_size)
    return {"accuracy": accuracy(pred, dataset.labels), "mcc": mcc(pred, dataset.labels),
            "confusion": confusion_matrix(pred, dataset.labels, model.classes),
            "predictions": pred}


def export_embeddings(checkpoint, dataset: Dataset, path, batch_size=None):
    """Write penultimate-layer points as CSV ``label,pred,p1..pn,v1..vn``.

    ``p*`` is the Poincare-ball image and ``v*`` the spatial part of the log
    map at the origin. Returns ``(poincare, tangent, predictions)``.
    """
    model, cfg = load_checkpoint(checkpoint)
    bs = batch_size or cfg.batch_size
    pts = np.concatenate([ad.no_grad_data(model.penultimate(dataset.features[i:i + bs]))
                          for i in range(0, len(dataset), bs)])
    pred, _ = predict(model, dataset.features, bs)
    ball = lorentz_to_poincare(pts, cfg.curvature)
    tangent = log_origin(pts, cfg.curvature)[:, 1:]
    n = pts.shape[1] - 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "pred"] + [f"p{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)])
        for y, yhat, b, v in zip(dataset.labels, pred, ball, tangent):
            w.writerow([int(y), int(yhat)] + [repr(float(e)) for e in b] + [repr(float(e)) for e in v])
    return ball, tangent, pred


BENCH_VARIANTS = ("gyrolbn", "gyrobn-iter1", "gyrobn-iter2", "gyrobn-iter5", "gyrobn-iter10",
                  "gyrobn-converge")


def bench_batch(batch, dim, seed, k=-1.0):
    """Points ``exp_o`` of Gaussian tangent vectors with unit expected norm."""
    rng = np.random.default_rng(seed)
    v = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(batch, dim))
    return exp_origin(np.concatenate([np.zeros((batch, 1)), v], axis=1), k)


def bench_norm(cfg: RunConfig, variants=BENCH_VARIANTS, timer=_time.perf_counter):
    """Time one training-mode forward of each normalization variant.

    Warm-up repetitions are discarded; returns one record per variant with
    median, quartiles and IQR of wall time in seconds.
    """
    seed = cfg.require_seed()
    if cfg.bench_reps < 1 or cfg.bench_warmup < 0:
        raise ConfigurationError("bench_reps must be >= 1 and bench_warmup >= 0")
    x = bench_batch(cfg.bench_batch, cfg.bench_dim, seed, cfg.curvature)
    records = []
    for variant in variants:
        iters = None if variant == "gyrolbn" else (
            "converge" if variant == "gyrobn-converge" else int(variant[len("gyrobn-iter"):]))
        times = []
        for rep in range(cfg.bench_warmup + cfg.bench_reps):
            state = NormState(cfg.bench_dim, cfg.curvature, track_running=False)
            start = timer()
            if iters is None:
                gyrolbn_forward(x, state, "train")
            else:
                gyrobn_forward(x, state, "train", iters)
            elapsed = timer() - start
            if rep >= cfg.bench_warmup:
                times.append(elapsed)
        q1, med, q3 = np.percentile(times, [25, 50, 75])
        records.append({"variant": variant, "batch": cfg.bench_batch, "dim": cfg.bench_dim,
                        "reps": cfg.bench_reps, "median_s": float(med), "q1_s": float(q1),
                        "q3_s": float(q3), "iqr_s": float(q3 - q1)})
    return records


def format_bench(records):
    lines = []
    for r in records:
        lines.append(" ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return "\n".join(lines) + "\n"

