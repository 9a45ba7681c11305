"""The six multi-label evaluation metrics, larger-is-better convention.

Rank-based metrics order scores descending with ties broken by ascending
label index; pair-counting metrics give ties half credit. Coverage is
normalized by the label count so every reported value lands in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError


@dataclass
class MetricReport:
    ap: float
    one_minus_hl: float
    one_minus_rl: float
    auc: float
    one_minus_oe: float
    one_minus_cov: float
    n_eval: int

    def as_dict(self):
        return {
            "ap": self.ap,
            "one_minus_hl": self.one_minus_hl,
            "one_minus_rl": self.one_minus_rl,
            "auc": self.auc,
            "one_minus_oe": self.one_minus_oe,
            "one_minus_cov": self.one_minus_cov,
            "n_eval": self.n_eval,
        }

    @staticmethod
    def names():
        return ["ap", "one_minus_hl", "one_minus_rl", "auc", "one_minus_oe",
                "one_minus_cov"]


def _ranks_desc(scores: np.ndarray) -> np.ndarray:
    """1-based ranks under descending score, ties to the smaller index."""
    c = scores.shape[0]
    order = np.lexsort((np.arange(c), -scores))
    ranks = np.empty(c, dtype=np.int64)
    ranks[order] = np.arange(1, c + 1)
    return ranks


def average_precision(p: np.ndarray, y: np.ndarray) -> float:
    """Sample-wise AP; samples without a positive label are skipped."""
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y)
    totals = []
    for i in range(p.shape[0]):
        pos = y[i] == 1
        if not pos.any():
            continue
        order = np.lexsort((np.arange(p.shape[1]), -p[i]))
        pos_sorted = pos[order]
        hits = np.cumsum(pos_sorted)
        where = np.flatnonzero(pos_sorted)
        totals.append(float(np.mean(hits[where] / (where + 1))))
    if not totals:
        raise MetricError("average_precision: no sample has a positive label")
    return float(np.mean(totals))


def hamming(p: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    """1 - HL with predictions thresholded at 0.5."""
    pred = np.asarray(p) >= threshold
    return 1.0 - float(np.mean(pred != (np.asarray(y) == 1)))


def _pair_fraction(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    # fraction of (pos, neg) pairs ordered correctly, ties worth 1/2
    diff = pos_scores[:, None] - neg_scores[None, :]
    good = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return good / diff.size


def ranking_loss(p: np.ndarray, y: np.ndarray) -> float:
    """1 - RL; RL is the mean mis-ordered (positive, negative) pair fraction."""
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y)
    vals = []
    for i in range(p.shape[0]):
        pos = y[i] == 1
        if not pos.any() or pos.all():
            continue
        vals.append(1.0 - _pair_fraction(p[i][pos], p[i][~pos]))
    if not vals:
        raise MetricError("ranking_loss: no sample has both label classes")
    return 1.0 - float(np.mean(vals))


def auc(p: np.ndarray, y: np.ndarray) -> float:
    """Macro average over labels of the column-wise rank AUC (ties half)."""
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y)
    vals = []
    for j in range(p.shape[1]):
        pos = y[:, j] == 1
        if not pos.any() or pos.all():
            continue
        vals.append(_pair_fraction(p[pos, j], p[~pos, j]))
    if not vals:
        raise MetricError("auc: no label column has both classes")
    return float(np.mean(vals))


def one_error(p: np.ndarray, y: np.ndarray) -> float:
    """1 - OE; OE is the rate of samples whose top label is not positive.

    Top-score ties resolve to the smallest label index.
    """
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y)
    hits, n = 0, 0
    for i in range(p.shape[0]):
        if not (y[i] == 1).any():
            continue
        n += 1
        hits += int(y[i, int(np.argmax(p[i]))] == 1)
    if n == 0:
        raise MetricError("one_error: no sample has a positive label")
    return hits / n


def coverage(p: np.ndarray, y: np.ndarray) -> float:
    """1 - Cov with Cov = mean (deepest positive rank - 1) / c."""
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y)
    c = p.shape[1]
    vals = []
    for i in range(p.shape[0]):
        pos = y[i] == 1
        if not pos.any():
            continue
        vals.append((int(_ranks_desc(p[i])[pos].max()) - 1) / c)
    if not vals:
        raise MetricError("coverage: no sample has a positive label")
    return 1.0 - float(np.mean(vals))


def evaluate_all(p: np.ndarray, y: np.ndarray) -> MetricReport:
    """All six metrics on a score matrix against binary ground truth."""
    return MetricReport(
        ap=average_precision(p, y),
        one_minus_hl=hamming(p, y),
        one_minus_rl=ranking_loss(p, y),
        auc=auc(p, y),
        one_minus_oe=one_error(p, y),
        one_minus_cov=coverage(p, y),
        n_eval=int(np.asarray(y).shape[0]),
    )
