"""Bi-encoder training losses with analytic gradients w.r.t. the embeddings."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LossKind(enum.Enum):
    TRIPLET = "triplet"
    NLL = "nll"
    NTXENT = "ntxent"


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.NTXENT
    margin: float = 1.0
    temperature: float = 20.0
    batch_size: int = 64
    negatives_per_sample: int = 3

    def __post_init__(self):
        if self.margin <= 0 or self.temperature <= 0:
            raise ValueError("margin and temperature must be positive")
        if self.batch_size < 1 or self.negatives_per_sample < 1:
            raise ValueError("batch_size and negatives_per_sample must be >= 1")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray, weights: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """(Weighted) mean over rows of ``-log softmax(logits[i])[targets[i]]`` and its gradient w.r.t. ``logits``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.atleast_1d(targets)
    rows = np.arange(logits.shape[0])
    w = np.ones(logits.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    logp = _log_softmax(logits)
    loss = -(w * logp[rows, targets]).sum()
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return float(loss), grad * w[:, None]


def triplet_loss(anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray, margin: float):
    """``max(0, |a-p| - |a-n| + margin)`` and gradients ``(d_anchor, d_positive, d_negative)``.

    At the hinge and at zero distances the zero subgradient is used.
    """
    a, p, n = (np.asarray(x, dtype=np.float64) for x in (anchor, positive, negative))
    if not a.shape == p.shape == n.shape:
        raise ValueError("embeddings must share one dimension")
    d_ap_vec, d_an_vec = a - p, a - n
    d_ap, d_an = np.linalg.norm(d_ap_vec), np.linalg.norm(d_an_vec)
    value = d_ap - d_an + margin
    zeros = np.zeros_like(a)
    if value <= 0:
        return 0.0, (zeros, zeros.copy(), zeros.copy())
    u_ap = d_ap_vec / d_ap if d_ap > 0 else zeros
    u_an = d_an_vec / d_an if d_an > 0 else zeros
    return float(value), (u_ap - u_an, -u_ap, u_an.copy())


def nll_loss(anchor: np.ndarray, positive: np.ndarray, negatives: np.ndarray):
    """Softmax NLL of the positive among ``{positive} ∪ negatives`` under dot-product logits.

    Returns ``loss, (d_anchor, d_positive, d_negatives)``; ``negatives`` has one row per sample.
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if N.shape[0] < 1:
        raise ValueError("need at least one negative")
    cands = np.vstack([p, N])
    loss, g = softmax_cross_entropy(cands @ a, np.array([0]))
    g = g[0]
    return loss, (g @ cands, g[0] * a, np.outer(g[1:], a))


def ntxent_loss(anchors: np.ndarray, positives: np.ndarray, temperature: float, weights: np.ndarray | None = None):
    """NT-Xent with in-batch negatives: ``logits[i, j] = temperature * cos(a_i, p_j)``.

    The loss is the (optionally weighted) mean over rows of the cross-entropy
    of the diagonal. Returns ``loss, (d_anchors, d_positives)``.
    """
    A = np.asarray(anchors, dtype=np.float64)
    P = np.asarray(positives, dtype=np.float64)
    if A.shape != P.shape or A.ndim != 2:
        raise ValueError("anchors and positives must be matching (batch, dim) arrays")
    if A.shape[0] < 2:
        raise ValueError("NT-Xent needs a batch of at least 2")
    na = np.linalg.norm(A, axis=1, keepdims=True)
    npos = np.linalg.norm(P, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(npos == 0):
        raise ValueError("zero vector in NT-Xent batch")
    Ah, Ph = A / na, P / npos
    C = Ah @ Ph.T
    loss, G = softmax_cross_entropy(temperature * C, np.arange(A.shape[0]), weights)
    G = temperature * G
    # d cos(a, p) / d a = (p_hat - cos * a_hat) / |a|
    dA = (G @ Ph - (G * C).sum(axis=1, keepdims=True) * Ah) / na
    dP = (G.T @ Ah - (G * C).sum(axis=0)[:, None] * Ph) / npos
    return loss, (dA, dP)
