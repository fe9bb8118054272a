"""Training losses over batches of predictions.

Both losses are built from tape ops, so gradients come from the same reverse
pass as everything else. The *_value_grad helpers run a standalone float64
graph for callers that just want numbers.
"""

from __future__ import annotations

import logging

import numpy as np

from ..nn.tensor import Tensor

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.3


def plcc_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """(1 - pearson(pred, target)) / 2, in [0, 1].

    A constant prediction batch has no defined correlation; the loss is then
    0.5 with zero gradient, and the degenerate batch is logged.
    """
    t = np.asarray(target, dtype=pred.data.dtype)
    if pred.data.size < 2:
        raise ValueError("plcc_loss needs a batch of at least 2")
    if np.ptp(pred.data) == 0.0 or np.ptp(t) == 0.0:
        log.warning("degenerate plcc batch (constant %s)",
                    "predictions" if np.ptp(pred.data) == 0.0 else "targets")
        return Tensor(np.asarray(0.5, dtype=pred.data.dtype))
    n = pred.data.size
    pc = pred - pred.mean()
    tc = Tensor(t - t.mean())
    cov = (pc * tc).sum()
    denom = ((pc * pc).sum() * float((tc.data * tc.data).sum())).sqrt()
    r = cov / denom
    loss = (1.0 - r) * 0.5
    # rounding can push |r| a hair past 1 on collinear batches; the true
    # value cannot leave [0, 1], so pin the forward result (gradients are
    # taken from the unclipped graph and are unaffected)
    np.clip(loss.data, 0.0, 1.0, out=loss.data)
    return loss


def ranking_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean pairwise hinge on order violations, (1/n^2) sum max(d_ji * sgn, 0).

    Subgradient at the hinge kink is 0 (relu convention). Tied targets
    contribute nothing since sgn(0) = 0.
    """
    t = np.asarray(target, dtype=pred.data.dtype)
    n = pred.data.size
    if n < 2:
        raise ValueError("ranking_loss needs a batch of at least 2")
    sgn = np.sign(t[:, None] - t[None, :])
    diffs = pred.reshape(1, n) - pred.reshape(n, 1)  # diffs[i, j] = pred_j - pred_i
    return (diffs * Tensor(sgn)).relu().sum() * (1.0 / (n * n))


def total_loss(pred: Tensor, target: np.ndarray, alpha: float = DEFAULT_ALPHA) -> Tensor:
    return plcc_loss(pred, target) + alpha * ranking_loss(pred, target)


def _value_grad(fn, pred: np.ndarray, target: np.ndarray, **kw):
    p = Tensor(np.asarray(pred, dtype=np.float64), requires_grad=True)
    loss = fn(p, np.asarray(target, dtype=np.float64), **kw)
    loss.backward()
    g = p.grad if p.grad is not None else np.zeros_like(p.data)
    return loss.item(), g


def plcc_loss_value_grad(pred, target):
    return _value_grad(plcc_loss, pred, target)


def ranking_loss_value_grad(pred, target):
    return _value_grad(ranking_loss, pred, target)


def total_loss_value_grad(pred, target, alpha: float = DEFAULT_ALPHA):
    return _value_grad(total_loss, pred, target, alpha=alpha)
