"""View-specific encoders, decoders, classifiers, and the masked forward pass.

Each view gets an MLP encoder d_v -> hidden... -> d_e, a mirrored decoder,
and an affine classifier d_e -> c. The forward pass only ever feeds rows with
an observed view into the network: per view, the available rows are selected
first, so arbitrary garbage stored in masked-out rows can never reach any
loss or gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import quantizer as vq
from .errors import DimensionError

PROB_EPS = 1e-7  # predictions are clamped to [PROB_EPS, 1 - PROB_EPS]


def _affine_params(rng, fan_in, fan_out, bound, dtype):
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    weight = dc.Tensor(w, requires_grad=True, dtype=dtype)
    bias = dc.Tensor(np.zeros((1, fan_out)), requires_grad=True, dtype=dtype)
    return weight, bias


def _mlp_params(rng, dims, dtype):
    """Kaiming-uniform fan-in weights, zero biases, for each layer of dims."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        layers.append(_affine_params(rng, fan_in, fan_out, bound, dtype))
    return layers


@dataclass
class ViewBranch:
    """Parameters of one view: encoder, decoder, classifier."""

    encoder: list
    decoder: list
    classifier: tuple

    def named_parameters(self, prefix):
        for tag, layers in (("enc", self.encoder), ("dec", self.decoder)):
            for i, (w, b) in enumerate(layers):
                yield f"{prefix}.{tag}{i}.w", w
                yield f"{prefix}.{tag}{i}.b", b
        yield f"{prefix}.cls.w", self.classifier[0]
        yield f"{prefix}.cls.b", self.classifier[1]


def make_branch(rng, d_v, d_e, c, hidden, dtype=np.float64) -> ViewBranch:
    enc_dims = (d_v, *hidden, d_e)
    dec_dims = (d_e, *hidden, d_v)
    encoder = _mlp_params(rng, enc_dims, dtype)
    decoder = _mlp_params(rng, dec_dims, dtype)
    cls_bound = 1.0 / np.sqrt(d_e)
    classifier = _affine_params(rng, d_e, c, cls_bound, dtype)
    return ViewBranch(encoder=encoder, decoder=decoder, classifier=classifier)


def _run_mlp(x, layers):
    """Affine -> ReLU chain with no activation after the final layer."""
    h = x
    for i, (w, b) in enumerate(layers):
        h = dc.add_bias(dc.matmul(h, w), b)
        if i < len(layers) - 1:
            h = dc.relu(h)
    return h


def encode(x, branch: ViewBranch):
    """Map raw view features (rows x d_v) to continuous features (rows x d_e)."""
    if x.values.shape[1] != branch.encoder[0][0].values.shape[0]:
        raise DimensionError(
            f"encoder expects width {branch.encoder[0][0].values.shape[0]}, "
            f"got {x.values.shape[1]}")
    return _run_mlp(x, branch.encoder)


def decode_cross_view(z_hat, branch_j: ViewBranch):
    """Reconstruct view j's raw features from any view's quantized features."""
    if z_hat.values.shape[1] != branch_j.decoder[0][0].values.shape[0]:
        raise DimensionError(
            f"decoder expects width {branch_j.decoder[0][0].values.shape[0]}, "
            f"got {z_hat.values.shape[1]}")
    return _run_mlp(z_hat, branch_j.decoder)


def classify(z_hat, branch: ViewBranch):
    """Sigmoid of the affine label map, clamped away from 0 and 1."""
    w, b = branch.classifier
    logits = dc.add_bias(dc.matmul(z_hat, w), b)
    return dc.clamp(dc.sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)


class Model:
    """All trainable state: per-view branches plus the shared codebook."""

    def __init__(self, view_dims, c, d_e, g, k, hidden=(512, 512), seed=0,
                 use_codebook=True, dtype=np.float64):
        if d_e % g != 0:
            raise DimensionError(f"d_e={d_e} not divisible by g={g}")
        self.view_dims = list(view_dims)
        self.c = c
        self.d_e = d_e
        self.g = g
        self.hidden = tuple(hidden)
        self.dtype = dtype
        rng = np.random.Generator(np.random.PCG64(seed))
        self.branches = [make_branch(rng, d_v, d_e, c, hidden, dtype)
                         for d_v in self.view_dims]
        self.codebook = vq.Codebook(k, d_e // g, g, dtype=dtype) if use_codebook else None
        # Seed for the lazy k-means initialization on the first batch.
        self.kmeans_seed = int(rng.integers(0, 2 ** 62))

    @property
    def m(self):
        return len(self.branches)

    def named_parameters(self):
        params = []
        for v, branch in enumerate(self.branches):
            params.extend(branch.named_parameters(f"view{v}"))
        if self.codebook is not None:
            params.append(("codebook.embeddings", self.codebook.embeddings))
        return params

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()


@dataclass
class ForwardState:
    """Everything one batch's forward produced, in per-view compacted form.

    Row r of the per-view arrays corresponds to batch row avail[v][r]; masked
    rows of the batch are simply absent. ``p_full`` scatters predictions back
    to batch shape with zero rows for missing views (used by fusion, where
    those rows carry zero weight).
    """

    avail: list                      # per view: indices of rows with W=1
    z: list                          # per view: (n_v, d_e) continuous
    z_hat: list                      # per view: straight-through quantized
    p_views: list                    # per view: (n_v, c) clamped predictions
    p_full: list                     # per view: (n_h, c), zeros on missing rows
    recon: dict = field(default_factory=dict)   # (j, v) -> (joint positions in avail[v], X_hat)
    quant: list = field(default_factory=list)   # per view QuantizationOutput or None
    vq_sum: dc.Tensor | None = None
    vq_count: int = 0                # sum of W over the batch


def forward_pass(model: Model, batch, with_reconstruction=True,
                 cross_view=True) -> ForwardState:
    """Masked forward pass over one batch.

    Encodes only available rows per view, lazily k-means-initializes the
    codebook on the first batch, quantizes, classifies, and reconstructs
    every (target j, source v) pair that has at least one jointly observed
    sample. With ``cross_view`` off only j == v pairs are decoded.
    """
    n_h = batch.size
    w = batch.view_mask
    avail = [np.flatnonzero(w[:, v] == 1.0) for v in range(model.m)]

    z = []
    for v, branch in enumerate(model.branches):
        x_sub = dc.constant(batch.views[v][avail[v]].astype(model.dtype))
        z.append(encode(x_sub, branch))

    if model.codebook is not None and not model.codebook.initialized:
        pool = [zv.values.reshape(-1, model.codebook.d_c) for zv in z
                if zv.values.shape[0] > 0]
        seed_segments = np.concatenate(pool, axis=0)
        init = vq.kmeans_init(seed_segments, model.codebook.k, model.kmeans_seed,
                              g=model.g)
        model.codebook.embeddings.values[...] = init.embeddings.values
        model.codebook.initialized = True

    z_hat, quant, vq_terms = [], [], []
    for v in range(model.m):
        if model.codebook is None:
            z_hat.append(z[v])
            quant.append(None)
        else:
            out = vq.quantize_batch(z[v], model.codebook)
            z_hat.append(out.quantized)
            quant.append(out)
            vq_terms.append(out.vq_sum)
    vq_sum = None
    if vq_terms:
        total = vq_terms[0]
        for term in vq_terms[1:]:
            total = dc.add(total, term)
        vq_sum = total

    p_views, p_full = [], []
    for v in range(model.m):
        p = classify(z_hat[v], model.branches[v])
        p_views.append(p)
        p_full.append(dc.scatter_rows(p, avail[v], n_h))

    recon = {}
    if with_reconstruction:
        for v in range(model.m):
            targets = range(model.m) if cross_view else (v,)
            for j in targets:
                # positions (within avail[v]) of rows that also observe view j
                joint = np.flatnonzero(w[avail[v], j] == 1.0)
                if joint.size == 0:
                    continue
                src = dc.take_rows(z_hat[v], joint) if joint.size != avail[v].size else z_hat[v]
                recon[(j, v)] = (joint, decode_cross_view(src, model.branches[j]))

    return ForwardState(avail=avail, z=z, z_hat=z_hat, p_views=p_views,
                        p_full=p_full, recon=recon, quant=quant, vq_sum=vq_sum,
                        vq_count=int(w.sum()))
