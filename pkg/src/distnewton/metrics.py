"""Test-set metrics on network outputs."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigurationError


def predict_classes(outputs):
    """Class index per row: argmax for one-hot outputs, 1 if z >= 0 else 0
    for a single output."""
    outputs = np.asarray(outputs)
    if outputs.ndim == 1 or outputs.shape[1] == 1:
        return (outputs.reshape(-1) >= 0).astype(int)
    return np.argmax(outputs, axis=1)


def true_classes(labels):
    labels = np.asarray(labels)
    if labels.ndim == 1 or labels.shape[1] == 1:
        return (labels.reshape(-1) > 0).astype(int)
    return np.argmax(labels, axis=1)


def accuracy(outputs, labels) -> float:
    return float(np.mean(predict_classes(outputs) == true_classes(labels)))


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Tied scores share their average rank, which credits each tied
    positive/negative pair with one half.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = true_classes(labels).astype(bool)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigurationError("AUC needs both positive and negative instances")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(outputs, labels, metric="accuracy") -> float:
    if metric == "accuracy":
        return accuracy(outputs, labels)
    if metric == "auc":
        outputs = np.asarray(outputs)
        if outputs.ndim == 2 and outputs.shape[1] != 1:
            raise ConfigurationError("metric 'auc' requires a single output neuron")
        return auc(outputs, labels)
    raise ConfigurationError(f"unknown metric {metric!r}")
