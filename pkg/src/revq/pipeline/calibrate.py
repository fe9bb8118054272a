"""Monotone rescaling of raw predictions onto the subjective score scale."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


class DegeneratePredictions(ValueError):
    pass


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_map(predictions, subjective) -> np.ndarray:
    """Four-parameter logistic fit-by-moments mapping predictions to score range.

    beta1/beta2 are the subjective max/min, beta3 the prediction mean, beta4 a
    quarter of the prediction population std. Strictly increasing, so ranking
    is preserved exactly; constant predictions map to themselves with a warning.
    """
    o = np.asarray(predictions, dtype=np.float64)
    s = np.asarray(subjective, dtype=np.float64)
    if s.size == 0:
        raise ValueError("subjective scores must be nonempty")
    b4 = float(o.std())  # population std
    if b4 == 0.0:
        log.warning("constant predictions: logistic map degenerates to identity")
        return o.copy()
    b1, b2, b3 = float(s.max()), float(s.min()), float(o.mean())
    return (b1 - b2) * _stable_sigmoid((o - b3) / (b4 / 4.0)) + b2


def rescale_predictions(predictions, reference_mos) -> np.ndarray:
    """Z-score predictions, then restore the reference scores' mean and std."""
    p = np.asarray(predictions, dtype=np.float64)
    r = np.asarray(reference_mos, dtype=np.float64)
    std_p = float(p.std())
    if std_p == 0.0:
        raise DegeneratePredictions("cannot rescale constant predictions")
    return (p - p.mean()) / std_p * float(r.std()) + float(r.mean())
