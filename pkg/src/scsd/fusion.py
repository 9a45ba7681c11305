"""Label-correlation-guided view quality estimation and decision fusion.

A view whose batch predictions reproduce the training set's label
co-occurrence structure gets a higher weight. Quality scores and weights are
plain numpy and deliberately excluded from gradient flow: the fused BCE
gradient reaches the per-view predictions only through the convex
combination, with the weights treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

CORR_EPS = 1e-8
EMA_DECAY = 0.9


def global_label_correlation(y_observed: np.ndarray, eps: float = CORR_EPS) -> np.ndarray:
    """Conditional co-occurrence S[i, j] = P(label j | label i) from training labels.

    S[i, j] = (Y_:,i . Y_:,j) / (Y_:,i . Y_:,i + eps); a label with no
    positives yields a near-zero row thanks to eps.
    """
    y = np.asarray(y_observed, dtype=np.float64)
    gram = y.T @ y
    diag = np.diag(gram)
    return gram / (diag[:, None] + eps)


def batch_prediction_correlation(p_view: np.ndarray, w_col: np.ndarray,
                                 eps: float = CORR_EPS) -> np.ndarray:
    """Same formula over batch predictions, with missing-view rows zeroed."""
    p_hat = np.asarray(p_view, dtype=np.float64) * np.asarray(w_col, dtype=np.float64)[:, None]
    gram = p_hat.T @ p_hat
    diag = np.diag(gram)
    return gram / (diag[:, None] + eps)


def normalize_correlation(s: np.ndarray) -> np.ndarray:
    """Symmetrize then row-normalize; all-zero rows stay zero."""
    sym = (s + s.T) / 2.0
    sums = sym.sum(axis=1)
    out = sym.copy()
    nz = sums > 0.0
    out[nz] /= sums[nz, None]
    return out


def quality_scores(s_views_norm, s_norm: np.ndarray) -> np.ndarray:
    """q_v = -||S^_v - S^||_F; less structure distortion means higher quality."""
    return np.array([-float(np.linalg.norm(sv - s_norm)) for sv in s_views_norm])


def view_weights(q: np.ndarray, w_rows: np.ndarray, tau: float) -> np.ndarray:
    """Per-sample softmax over available views: exp(q_v/tau) masked by W.

    Rows sum to exactly 1 over available views and are 0 on missing ones.
    """
    w_rows = np.asarray(w_rows, dtype=np.float64)
    if np.any(w_rows.sum(axis=1) < 1):
        raise ContractError("a sample with no available view reached the fusion step")
    logits = np.asarray(q, dtype=np.float64) / tau
    e = np.exp(logits - logits.max())
    masked = w_rows * e[None, :]
    return masked / masked.sum(axis=1, keepdims=True)


def fuse(p_views, weights: np.ndarray) -> np.ndarray:
    """Weighted fusion P_i = sum_v w_i^v P^v_i over views (numpy arrays).

    Accumulates in ascending view order so the result is bit-for-bit the
    left-to-right evaluation of the written sum.
    """
    weights = np.asarray(weights, dtype=np.float64)
    out = np.zeros_like(np.asarray(p_views[0], dtype=np.float64))
    for v, p in enumerate(p_views):
        out += weights[:, v:v + 1] * np.asarray(p, dtype=np.float64)
    return out


def masked_average_fuse(p_views, w_rows: np.ndarray) -> np.ndarray:
    """Plain masked mean over available views (the fusion ablation)."""
    w_rows = np.asarray(w_rows, dtype=np.float64)
    counts = w_rows.sum(axis=1)
    if np.any(counts < 1):
        raise ContractError("a sample with no available view reached masked_average_fuse")
    total = np.zeros_like(np.asarray(p_views[0], dtype=np.float64))
    for v, p in enumerate(p_views):
        total += w_rows[:, v:v + 1] * np.asarray(p, dtype=np.float64)
    return total / counts[:, None]


def average_weights(w_rows: np.ndarray) -> np.ndarray:
    """Row-stochastic weights of the masked-average strategy."""
    w_rows = np.asarray(w_rows, dtype=np.float64)
    return w_rows / w_rows.sum(axis=1, keepdims=True)


@dataclass
class FusionState:
    """Global correlation structure plus the running quality estimate.

    The EMA of q is what inference uses in the frozen-weights mode; it is
    updated once per training batch.
    """

    s_global: np.ndarray
    tau: float = 1.0
    eps: float = CORR_EPS
    s_norm: np.ndarray = field(init=False)
    q_ema: np.ndarray | None = None

    def __post_init__(self):
        self.s_norm = normalize_correlation(self.s_global)

    def batch_weights(self, p_view_values, w_rows: np.ndarray, update_ema=True):
        """Per-batch quality scores and weights; optionally refresh the EMA."""
        s_views = [batch_prediction_correlation(p, w_rows[:, v], self.eps)
                   for v, p in enumerate(p_view_values)]
        q = quality_scores([normalize_correlation(s) for s in s_views], self.s_norm)
        if update_ema:
            if self.q_ema is None:
                self.q_ema = q.copy()
            else:
                self.q_ema = EMA_DECAY * self.q_ema + (1.0 - EMA_DECAY) * q
        return q, view_weights(q, w_rows, self.tau)

    def frozen_weights(self, w_rows: np.ndarray) -> np.ndarray:
        """Weights from the end-of-training q EMA, for inference."""
        if self.q_ema is None:
            raise ContractError("no q history recorded; train before frozen-weight eval")
        return view_weights(self.q_ema, w_rows, self.tau)
