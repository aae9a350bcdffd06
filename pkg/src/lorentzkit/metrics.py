import numpy as np

from .errors import ContractError


def confusion_matrix(predictions, labels, class_count=None):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ContractError("predictions and labels differ in length")
    if class_count is None:
        class_count = int(max(predictions.max(initial=0), labels.max(initial=0))) + 1
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or len(labels) == 0:
        raise ContractError("predictions and labels must be equal-length and nonempty")
    return float(np.mean(predictions == labels))


def mcc(predictions, labels):
    """Multiclass Matthews correlation (covariance form); 0 on a zero denominator."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or len(labels) == 0:
        raise ContractError("predictions and labels must be equal-length and nonempty")
    cm = confusion_matrix(predictions, labels).astype(np.float64)
    s = cm.sum()
    correct = np.trace(cm)
    p = cm.sum(axis=0)
    t = cm.sum(axis=1)
    cov_pt = correct * s - p @ t
    cov_pp = s * s - p @ p
    cov_tt = s * s - t @ t
    if cov_pp == 0 or cov_tt == 0:
        return 0.0
    return float(cov_pt / np.sqrt(cov_pp * cov_tt))
