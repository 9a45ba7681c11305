"""Shared grouped vector quantization.

Every view's d_e-wide feature row is split into g contiguous segments of
width d_c and each segment is matched against one learnable codebook shared
by all views. Lookup runs on unit-normalized vectors, the decoder consumes
the raw codebook rows, and the two-sided quantization loss keeps gradients
separated between the codebook and the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import DimensionError, ParameterError, StateError

# Distance matrices are evaluated in segment chunks to bound memory at the
# default codebook size (k=2048).
_LOOKUP_CHUNK = 1024


class Codebook:
    """Learnable shared embedding table with usage statistics.

    Rows are stable identities: never deleted or reordered after k-means
    initialization. ``usage_counts`` tallies lookups per row within the
    current evaluation window (reset with ``reset_usage``).
    """

    def __init__(self, k: int, d_c: int, g: int, dtype=np.float64):
        if k < 1 or d_c < 1 or g < 1:
            raise ParameterError(f"bad codebook sizes k={k} d_c={d_c} g={g}")
        self.k = k
        self.d_c = d_c
        self.g = g
        self.embeddings = dc.Tensor(np.zeros((k, d_c)), requires_grad=True, dtype=dtype)
        self.initialized = False
        self.usage_counts = np.zeros(k, dtype=np.int64)
        self.lookups_recorded = 0

    @property
    def d_e(self):
        return self.g * self.d_c

    def reset_usage(self):
        self.usage_counts[:] = 0
        self.lookups_recorded = 0


def segment(z_row: np.ndarray, g: int) -> list:
    """Split a length-d_e vector into g contiguous equal segments."""
    z_row = np.asarray(z_row)
    d_e = z_row.shape[-1]
    if d_e % g != 0:
        raise ParameterError(f"length {d_e} not divisible into {g} segments")
    return list(z_row.reshape(g, d_e // g))


def _l2_rows(x: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(x * x, axis=1))
    out = x.copy()
    nz = norms > 0.0
    out[nz] /= norms[nz, None]
    return out


def kmeans_init(segments, k: int, seed: int, g: int = 1) -> Codebook:
    """Build a codebook from k-means over segment vectors.

    k-means++ seeding followed by at most 10 Lloyd iterations. If the data
    has fewer than k distinct vectors, the surplus rows are duplicated
    centroids plus seeded Gaussian jitter (sigma = 1e-3 of the data scale).
    """
    pts = np.asarray(segments, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise StateError("kmeans_init needs at least one segment")
    rng = np.random.Generator(np.random.PCG64(seed))
    distinct = np.unique(pts, axis=0)
    k_eff = min(k, distinct.shape[0])
    centroids = _kmeans(pts, k_eff, rng)

    if k_eff < k:
        scale = float(pts.std())
        sigma = 1e-3 * (scale if scale > 0.0 else 1.0)
        extra = centroids[np.arange(k - k_eff) % k_eff]
        extra = extra + rng.normal(0.0, sigma, size=extra.shape)
        centroids = np.vstack([centroids, extra])

    cb = Codebook(k=k, d_c=pts.shape[1], g=g)
    cb.embeddings.values[...] = centroids
    cb.initialized = True
    return cb


def _assignments(pts, centers, pts_sq):
    # Expanded-form distances, chunked to bound the n x k matrix.
    c_sq = np.sum(centers * centers, axis=1)
    out = np.empty(pts.shape[0], dtype=np.intp)
    for start in range(0, pts.shape[0], 4096):
        block = pts[start:start + 4096]
        d2 = pts_sq[start:start + 4096, None] + c_sq[None, :] - 2.0 * (block @ centers.T)
        out[start:start + 4096] = np.argmin(d2, axis=1)
    return out


def _kmeans(pts, k, rng, iters=10):
    n = pts.shape[0]
    pts_sq = np.sum(pts * pts, axis=1)
    # k-means++ seeding
    centers = np.empty((k, pts.shape[1]), dtype=np.float64)
    centers[0] = pts[rng.integers(0, n)]
    closest = np.sum((pts - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[i] = pts[rng.integers(0, n)]
        else:
            centers[i] = pts[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, np.sum((pts - centers[i]) ** 2, axis=1))
    # Lloyd iterations; an emptied cluster keeps its previous centroid.
    for _ in range(iters):
        assign = _assignments(pts, centers, pts_sq)
        new_centers = centers.copy()
        for j in range(k):
            members = pts[assign == j]
            if members.shape[0] > 0:
                new_centers[j] = members.mean(axis=0)
        if np.allclose(new_centers, centers, rtol=0.0, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    return centers


def _nearest_indices(segs: np.ndarray, cb: Codebook) -> np.ndarray:
    """argmin_j ||l2(z) - l2(e_j)||^2 per row; ties go to the smallest index."""
    zn = _l2_rows(segs)
    en = _l2_rows(cb.embeddings.values)
    out = np.empty(segs.shape[0], dtype=np.intp)
    for start in range(0, segs.shape[0], _LOOKUP_CHUNK):
        chunk = zn[start:start + _LOOKUP_CHUNK]
        d2 = np.sum((chunk[:, None, :] - en[None, :, :]) ** 2, axis=2)
        out[start:start + _LOOKUP_CHUNK] = np.argmin(d2, axis=1)
    return out


def lookup(z_t: np.ndarray, cb: Codebook):
    """Nearest codebook row for one segment: (index, raw embedding row)."""
    if not cb.initialized:
        raise StateError("codebook not initialized")
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.shape != (cb.d_c,):
        raise DimensionError(f"segment shape {z_t.shape}, expected ({cb.d_c},)")
    idx = int(_nearest_indices(z_t[None, :], cb)[0])
    cb.usage_counts[idx] += 1
    cb.lookups_recorded += 1
    return idx, cb.embeddings.values[idx].copy()


@dataclass
class QuantizationOutput:
    """Per-batch quantization results.

    ``quantized`` carries the straight-through tensor: its forward values are
    exactly the reassembled codebook rows while its gradient flows to the
    encoder. ``vq_sum`` is the graph node holding the summed two-sided
    quantization loss over all segments (divide by the mask count to get the
    batch term); ``vq_loss_terms`` are its per-sample values.
    """

    indices: np.ndarray        # (rows, g) integers in [0, k)
    quantized: dc.Tensor       # (rows, d_e)
    vq_loss_terms: np.ndarray  # (rows,)
    vq_sum: dc.Tensor          # scalar


def quantize_batch(z: dc.Tensor, cb: Codebook) -> QuantizationOutput:
    """Segment, look up, and reassemble a batch of feature rows."""
    if not cb.initialized:
        raise StateError("codebook not initialized")
    rows, width = z.values.shape
    if width != cb.d_e:
        raise DimensionError(f"feature width {width} != g*d_c = {cb.d_e}")
    g, d_c = cb.g, cb.d_c

    segs = dc.reshape(z, (rows * g, d_c))
    idx = _nearest_indices(segs.values, cb)
    np.add.at(cb.usage_counts, idx, 1)
    cb.lookups_recorded += rows * g

    code_rows = dc.take_rows(cb.embeddings, idx)
    quantized_raw = dc.reshape(code_rows, (rows, cb.d_e))
    quantized = dc.straight_through(z, quantized_raw)

    per_segment, vq_sum = vq_loss(segs, code_rows)
    per_sample = per_segment.reshape(rows, g).sum(axis=1)
    return QuantizationOutput(indices=idx.reshape(rows, g), quantized=quantized,
                              vq_loss_terms=per_sample, vq_sum=vq_sum)


def vq_loss(z_segments: dc.Tensor, z_hat_segments: dc.Tensor):
    """Two-sided quantization loss over paired segments.

    sum_t ||sg[l2(z_t)] - l2(zhat_t)||^2 + ||l2(z_t) - sg[l2(zhat_t)]||^2.
    The first term reaches only the codebook, the second only the encoder.
    Returns (per-segment values, scalar graph node with the total).
    """
    if z_segments.values.shape != z_hat_segments.values.shape:
        raise DimensionError("segment tensors differ in shape")
    zn = dc.l2norm_rows(z_segments)
    qn = dc.l2norm_rows(z_hat_segments)
    to_codebook = dc.square(dc.sub(dc.stop_gradient(zn), qn))
    to_encoder = dc.square(dc.sub(zn, dc.stop_gradient(qn)))
    both = dc.add(to_codebook, to_encoder)
    per_segment = both.values.sum(axis=1)
    return per_segment, dc.tsum(both)


def utilization(cb: Codebook) -> float:
    """Fraction of codebook rows selected at least once in the window."""
    if cb.lookups_recorded == 0:
        raise StateError("no lookups recorded in the current window")
    return float(np.count_nonzero(cb.usage_counts)) / cb.k
