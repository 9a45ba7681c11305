"""Synthetic multi-view multi-label generator for desk-scale experiments.

Labels are correlated binary draws from a Gaussian copula (block-structured
correlation); each view's features are a sum of label prototypes plus
Gaussian noise, so every view carries a learnable but noisy signal.
"""

from __future__ import annotations

import numpy as np

from .data import MultiViewDataset


def make_synthetic_dataset(n=2000, c=8, m=2, seed=0, view_dims=None,
                           noise=0.5, label_block=2, rho_in=0.6, rho_out=0.1,
                           prior_range=(0.2, 0.4)) -> MultiViewDataset:
    """Fully observed dataset with correlated labels and prototype features."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if view_dims is None:
        view_dims = [24 + 8 * v for v in range(m)]

    # Pairwise-correlated latent Gaussians -> thresholded binary labels.
    corr = np.full((c, c), rho_out)
    for start in range(0, c, label_block):
        corr[start:start + label_block, start:start + label_block] = rho_in
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)
    latent = rng.standard_normal((n, c)) @ chol.T
    priors = rng.uniform(prior_range[0], prior_range[1], size=c)
    # P(latent > threshold) = prior for standard normal marginals
    thresholds = _norm_ppf(1.0 - priors)
    labels = (latent > thresholds[None, :]).astype(np.float64)

    views = []
    for v in range(m):
        prototypes = rng.standard_normal((c, view_dims[v]))
        x = labels @ prototypes + noise * rng.standard_normal((n, view_dims[v]))
        views.append(x)

    ones_vm = np.ones((n, m))
    ones_lm = np.ones((n, c))
    return MultiViewDataset(views=views, labels=labels, view_mask=ones_vm,
                            label_mask=ones_lm,
                            label_names=[f"label_{j}" for j in range(c)])


def _norm_ppf(q):
    """Standard normal inverse CDF (Acklam's rational approximation)."""
    q = np.asarray(q, dtype=np.float64)
    a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00]
    b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00]
    p_low, p_high = 0.02425, 1.0 - 0.02425
    out = np.empty_like(q)

    low = q < p_low
    mid = (~low) & (q <= p_high)
    high = q > p_high

    if low.any():
        r = np.sqrt(-2.0 * np.log(q[low]))
        out[low] = ((((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5])
                    / ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0))
    if mid.any():
        r = q[mid] - 0.5
        s = r * r
        out[mid] = ((((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * r
                    / (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0))
    if high.any():
        r = np.sqrt(-2.0 * np.log(1.0 - q[high]))
        out[high] = -((((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5])
                      / ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0))
    return out


def random_score_baseline(y: np.ndarray, seed=0, trials=10) -> float:
    """Mean sample-wise AP of uniform random scores (approximately the label prior)."""
    from .metrics import average_precision
    rng = np.random.Generator(np.random.PCG64(seed))
    vals = [average_precision(rng.random(np.asarray(y).shape), y) for _ in range(trials)]
    return float(np.mean(vals))
