"""Training objectives: binary cross-entropy with L1, and softmax cross-entropy."""

from __future__ import annotations

import numpy as np

EPSILON = 1e-7


def bce_l1_loss(prediction, label, weights=(), l1_coefficient: float = 0.0):
    """Mean binary cross-entropy plus an L1 penalty over `weights`.

    Returns ``(loss, d loss / d prediction)``. Predictions are clamped to
    [EPSILON, 1-EPSILON] before the logs, so the loss is finite for any
    prediction in [0, 1]. Scalar inputs behave as a batch of one.
    """
    p = np.asarray(prediction)
    y = np.asarray(label, dtype=p.dtype if p.dtype.kind == "f" else np.float64)
    if p.dtype.kind != "f":
        p = p.astype(np.float64)
        y = y.astype(np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} != label shape {y.shape}")

    pc = np.clip(p, p.dtype.type(EPSILON), p.dtype.type(1.0 - EPSILON))
    per_sample = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    n = max(per_sample.size, 1)
    penalty = l1_coefficient * sum(float(np.abs(np.asarray(w)).sum()) for w in weights)
    loss = float(per_sample.mean()) + penalty if per_sample.size else penalty
    dpred = (pc - y) / (pc * (1 - pc)) / p.dtype.type(n)
    return loss, dpred


def bce_grad(prediction, label):
    """`fit`-compatible wrapper: BCE data term only (L1 handled by the trainer)."""
    return bce_l1_loss(prediction, label)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy over integer class labels.

    Returns ``(loss, d loss / d logits)``.
    """
    z = np.asarray(logits)
    labels = np.asarray(labels)
    if z.ndim != 2:
        raise ValueError(f"logits must be (batch, classes), got shape {z.shape}")
    if labels.shape != (z.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match batch {z.shape[0]}")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ValueError("class label out of range")

    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = z.shape[0]
    idx = np.arange(n)
    logp = shifted[idx, labels] - np.log(expz.sum(axis=1))
    loss = float(-logp.mean())
    dlogits = probs.copy()
    dlogits[idx, labels] -= 1
    dlogits /= z.dtype.type(n) if z.dtype.kind == "f" else n
    return loss, dlogits
