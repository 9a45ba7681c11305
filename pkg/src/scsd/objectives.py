"""Masked loss terms and the combined training objective.

Every term is a mask-weighted mean: unobserved views and labels contribute
neither to the numerator nor to the normalizer. Mask coefficients enter the
graph as constants built with ``np.where`` so that garbage stored in
masked-out entries can never perturb a value or a gradient, not even in the
sign of a zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import NumericError

log = logging.getLogger(__name__)


@dataclass
class LossReport:
    """Scalar values of the loss terms plus their masked-mean normalizers."""

    l_c: float
    l_dis: float
    l_rec: float
    l_vq: float
    total: float
    n_bce: float = 0.0    # observed label entries under the fused BCE
    n_dis: float = 0.0    # observed (sample, view) pairs
    n_rec: float = 0.0    # jointly observed (sample, target, source) triples
    n_vq: float = 0.0     # observed (sample, view) pairs

    def as_row(self):
        return [self.l_c, self.l_dis, self.l_rec, self.l_vq, self.total]


def reconstruction_loss(state, batch):
    """Cross-view MSE over jointly observed (sample, j, v) triples.

    sum ||Xhat^(j,v)_i - X^(j)_i||^2 W_ij W_iv, divided by sum W_ij W_iv.
    Returns (scalar tensor, normalizer). A batch with no jointly observed
    pair yields 0 with a warning.
    """
    pieces = []
    normalizer = 0
    for (j, v), (joint_positions, x_hat) in state.recon.items():
        rows = state.avail[v][joint_positions]
        target = dc.constant(batch.views[j][rows].astype(x_hat.dtype))
        pieces.append(dc.tsum(dc.square(dc.sub(x_hat, target))))
        normalizer += rows.size
    if normalizer == 0:
        log.warning("reconstruction loss skipped: no jointly observed view pair in batch")
        return dc.constant(np.asarray(0.0)), 0
    total = pieces[0]
    for piece in pieces[1:]:
        total = dc.add(total, piece)
    return dc.mul(total, 1.0 / normalizer), normalizer


def _bce_coefficients(y, g_mask):
    # Exact-zero coefficients on unobserved entries, immune to stored garbage.
    pos = np.where(g_mask == 1.0, y, 0.0)
    neg = np.where(g_mask == 1.0, 1.0 - y, 0.0)
    return pos, neg


def masked_bce(p, y, g_mask):
    """Binary cross-entropy over observed label entries.

    -sum[Y log P + (1-Y) log(1-P)] G / sum G. ``p`` must already be clamped
    into (0, 1). Returns (scalar tensor, normalizer).
    """
    count = float(np.asarray(g_mask).sum())
    if count == 0.0:
        log.warning("masked BCE skipped: no observed label in batch")
        return dc.constant(np.asarray(0.0)), 0.0
    pos, neg = _bce_coefficients(np.asarray(y, dtype=np.float64), np.asarray(g_mask))
    ll = dc.add(dc.mul(dc.constant(pos), dc.log(p)),
                dc.mul(dc.constant(neg), dc.log(dc.sub(1.0, p))))
    return dc.mul(dc.tsum(ll), -1.0 / count), count


def binary_kl(teacher_p, student_p):
    """One-vs-all KL for a single probability (or elementwise on arrays)."""
    p = np.asarray(teacher_p, dtype=np.float64)
    q = np.asarray(student_p, dtype=np.float64)
    out = p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def distillation_loss(p_fused, state, batch, lam, include_kl=True):
    """Fused-teacher self-distillation over observed (sample, view) pairs.

    Per observed pair: lam * KL(sg[fused] || view prediction), realized as
    the mean over the c labels of the one-vs-all binary KL, plus
    (1 - lam) * per-row observed-label BCE. The teacher is detached, so no
    gradient reaches the fused prediction through this loss. ``include_kl``
    off drops the imitation term (the distillation-KL ablation).
    Returns (scalar tensor, normalizer).
    """
    teacher = dc.stop_gradient(p_fused).values
    c = teacher.shape[1]
    n_pairs = 0
    kl_parts = []
    bce_parts = []
    for v, rows in enumerate(state.avail):
        if rows.size == 0:
            continue
        n_pairs += rows.size
        t = teacher[rows]
        q = state.p_views[v]
        if include_kl:
            # KL split: constant teacher entropy plus cross terms vs the student.
            entropy = float(np.sum(t * np.log(t) + (1.0 - t) * np.log(1.0 - t)))
            cross = dc.add(dc.tsum(dc.mul(dc.constant(-t), dc.log(q))),
                           dc.tsum(dc.mul(dc.constant(-(1.0 - t)),
                                          dc.log(dc.sub(1.0, q)))))
            kl_parts.append(dc.add(cross, dc.constant(np.asarray(entropy))))

        g_rows = batch.label_mask[rows]
        pos, neg = _bce_coefficients(batch.labels[rows], g_rows)
        row_counts = g_rows.sum(axis=1)
        inv = np.where(row_counts > 0.0, 1.0 / np.maximum(row_counts, 1.0), 0.0)
        ll = dc.add(dc.mul(dc.constant(pos * inv[:, None]), dc.log(q)),
                    dc.mul(dc.constant(neg * inv[:, None]), dc.log(dc.sub(1.0, q))))
        bce_parts.append(dc.mul(dc.tsum(ll), -1.0))

    if n_pairs == 0:
        log.warning("distillation loss skipped: no observed (sample, view) pair")
        return dc.constant(np.asarray(0.0)), 0
    bce_sum = bce_parts[0]
    for part in bce_parts[1:]:
        bce_sum = dc.add(bce_sum, part)
    combined = dc.mul(bce_sum, 1.0 - lam)
    if include_kl:
        kl_sum = kl_parts[0]
        for part in kl_parts[1:]:
            kl_sum = dc.add(kl_sum, part)
        combined = dc.add(dc.mul(kl_sum, lam / c), combined)
    return dc.mul(combined, 1.0 / n_pairs), n_pairs


def total_loss(l_c, l_dis, l_rec, l_vq, alpha, counts=(0.0, 0.0, 0.0, 0.0)):
    """Combine the four terms: L = L_c + L_dis + alpha * L_rec + L_vq.

    Returns (scalar tensor, LossReport). Raises NumericError naming the
    first non-finite term.
    """
    total = dc.add(dc.add(l_c, l_dis), dc.add(dc.mul(l_rec, alpha), l_vq))
    report = LossReport(
        l_c=float(l_c.values), l_dis=float(l_dis.values),
        l_rec=float(l_rec.values), l_vq=float(l_vq.values),
        total=float(total.values),
        n_bce=counts[0], n_dis=counts[1], n_rec=counts[2], n_vq=counts[3],
    )
    for name, value in (("l_c", report.l_c), ("l_dis", report.l_dis),
                        ("l_rec", report.l_rec), ("l_vq", report.l_vq)):
        if not np.isfinite(value):
            raise NumericError(f"loss term {name} is non-finite ({value})")
    return total, report
