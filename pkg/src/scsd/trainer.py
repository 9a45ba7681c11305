"""Training loop, evaluation, experiment harness.

One training step: encode available rows, lazily k-means-init the codebook on
the first batch, quantize, cross-view decode, classify, correlation-weighted
fusion, masked losses, backward, AdamW update. Ablation switches rewire the
same pipeline (continuous features instead of quantized ones, self-only
reconstruction, masked-average fusion, dropped loss terms).
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import diffcore as dc
from . import fusion as fus_mod
from . import network
from . import objectives
from .checkpoint import save_checkpoint
from .data import MissingnessSpec, MultiViewDataset, iterate_batches
from .data import simulate_missing_labels, simulate_missing_views, split
from .errors import DataLoadError, NumericError, ParameterError
from .metrics import MetricReport, evaluate_all
from .optim import AdamW
from .quantizer import utilization

log = logging.getLogger(__name__)

ABLATION_FLAGS = ("no_dis", "no_dis_kl", "no_rec", "no_vq",
                  "no_cross_view_rec", "avg_fusion")


@dataclass
class TrainConfig:
    """All knobs of a training run; flat key=value files map 1:1 onto fields."""

    alpha: float = 1.0
    lam: float = 0.1            # imitation weight inside the distillation term
    tau: float = 1.0            # fusion softmax temperature
    lr: float = 1e-3
    weight_decay: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0
    d_e: int = 512
    g: int = 128
    k: int = 2048
    hidden: tuple = (512, 512)
    precision: str = "f64"      # "f32" is the opt-in speed mode
    early_stop_patience: int = 20
    weight_mode: str = "frozen_ema"   # or "per_batch"
    s_gaware: bool = False      # mask-aware variant of the global correlation
    # ablation switches
    no_dis: bool = False
    no_dis_kl: bool = False
    no_rec: bool = False
    no_vq: bool = False
    no_cross_view_rec: bool = False
    avg_fusion: bool = False
    # experiment protocol (used by the harness, not the core step)
    view_missing: float = 0.0
    label_missing: float = 0.0
    train_fraction: float = 0.7

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ParameterError(f"lam must be in [0, 1], got {self.lam}")
        if self.alpha < 0.0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.tau <= 0.0:
            raise ParameterError(f"tau must be > 0, got {self.tau}")
        if self.d_e % self.g != 0:
            raise ParameterError(f"d_e={self.d_e} not divisible by g={self.g}")
        if self.precision not in ("f64", "f32"):
            raise ParameterError(f"precision must be f64 or f32, got {self.precision}")
        if self.weight_mode not in ("frozen_ema", "per_batch"):
            raise ParameterError(f"unknown weight_mode {self.weight_mode}")
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32


def parse_config(text: str, **overrides) -> TrainConfig:
    """Parse flat ``key = value`` lines (# comments allowed) into a config."""
    known = {f.name: f for f in fields(TrainConfig)}
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
        else:
            key, val = (s.strip() for s in line.split(None, 1))
        if key == "lambda":
            key = "lam"
        if key not in known:
            raise ParameterError(f"unknown config key {key!r}")
        values[key] = _parse_value(known[key], val)
    values.update(overrides)
    return TrainConfig(**values)


def _parse_value(f, val: str):
    if f.type in ("bool", bool):
        return val.lower() in ("1", "true", "yes", "on")
    if f.type in ("int", int):
        return int(val)
    if f.type in ("float", float):
        return float(val)
    if f.name == "hidden":
        return tuple(int(x) for x in val.split(",") if x.strip())
    return val


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for key, val in asdict(cfg).items():
        if key == "hidden":
            val = ",".join(str(h) for h in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# One batch
# ---------------------------------------------------------------------------

@dataclass
class StepOutput:
    total: dc.Tensor
    report: objectives.LossReport
    state: network.ForwardState
    weights: np.ndarray
    fused: dc.Tensor
    q: np.ndarray | None


def fuse_in_graph(p_full, weights):
    """Convex combination of per-view predictions with constant weights."""
    n, c = p_full[0].values.shape
    fused = None
    for v, p in enumerate(p_full):
        w_tile = np.ascontiguousarray(
            np.broadcast_to(weights[:, v:v + 1], (n, c)).astype(p.values.dtype))
        piece = dc.mul(p, dc.constant(w_tile))
        fused = piece if fused is None else dc.add(fused, piece)
    return dc.clamp(fused, network.PROB_EPS, 1.0 - network.PROB_EPS)


def compute_losses(model, batch, fus: fus_mod.FusionState, cfg: TrainConfig,
                   update_ema=True) -> StepOutput:
    """Forward pass, fusion, and all four loss terms for one batch."""
    state = network.forward_pass(model, batch,
                                 with_reconstruction=not cfg.no_rec,
                                 cross_view=not cfg.no_cross_view_rec)
    q = None
    if cfg.avg_fusion:
        weights = fus_mod.average_weights(batch.view_mask)
    else:
        q, weights = fus.batch_weights([p.values for p in state.p_full],
                                       batch.view_mask, update_ema=update_ema)
    fused = fuse_in_graph(state.p_full, weights)

    l_c, n_bce = objectives.masked_bce(fused, batch.labels, batch.label_mask)
    if cfg.no_dis:
        l_dis, n_dis = dc.constant(np.asarray(0.0)), 0
    else:
        l_dis, n_dis = objectives.distillation_loss(
            fused, state, batch, cfg.lam, include_kl=not cfg.no_dis_kl)
    if cfg.no_rec:
        l_rec, n_rec = dc.constant(np.asarray(0.0)), 0
    else:
        l_rec, n_rec = objectives.reconstruction_loss(state, batch)
    if state.vq_sum is None:
        l_vq, n_vq = dc.constant(np.asarray(0.0)), 0
    else:
        l_vq = dc.mul(state.vq_sum, 1.0 / state.vq_count)
        n_vq = state.vq_count

    total, report = objectives.total_loss(l_c, l_dis, l_rec, l_vq, cfg.alpha,
                                          counts=(n_bce, n_dis, n_rec, n_vq))
    return StepOutput(total=total, report=report, state=state, weights=weights,
                      fused=fused, q=q)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Everything one run produced, JSON-serializable via as_dict."""

    config: dict
    losses: list = field(default_factory=list)        # per-epoch LossReport
    utilization: list = field(default_factory=list)   # per-epoch float or None
    val_ap: list = field(default_factory=list)
    q_history: list = field(default_factory=list)     # per-epoch q EMA per view
    final_metrics: MetricReport | None = None
    baseline_ap: float | None = None
    best_epoch: int = 0
    wall_clock: float = 0.0

    def as_dict(self):
        out = {
            "config": self.config,
            "losses": [r.as_row() for r in self.losses],
            "utilization": self.utilization,
            "val_ap": self.val_ap,
            "q_history": self.q_history,
            "best_epoch": self.best_epoch,
            "wall_clock": self.wall_clock,
        }
        if self.final_metrics is not None:
            out["final_metrics"] = self.final_metrics.as_dict()
        if self.baseline_ap is not None:
            out["baseline_ap"] = self.baseline_ap
        return out


def global_correlation_for(ds: MultiViewDataset, cfg: TrainConfig) -> np.ndarray:
    """Conditional label co-occurrence matrix from the training labels.

    The default uses the zero-filled training labels as stored; the
    mask-aware variant normalizes each (i, j) cell by positives of i counted
    only over rows where j is observed.
    """
    y = ds.observed_labels()
    if not cfg.s_gaware:
        return fus_mod.global_label_correlation(y)
    g = ds.label_mask
    num = (y * g).T @ (y * g)
    den = y.T @ g  # [i, j]: count of i-positives among rows observing j
    return num / (den + fus_mod.CORR_EPS)


def _snapshot(model):
    return {name: p.values.copy() for name, p in model.named_parameters()}


def _restore(model, snap):
    for name, p in model.named_parameters():
        p.values[...] = snap[name]


def train(cfg: TrainConfig, train_ds: MultiViewDataset,
          val_ds: MultiViewDataset | None = None):
    """Run the full optimization loop; returns (checkpoint, ExperimentReport).

    The checkpoint is the (meta, tensors) pair of the best-validation-AP
    parameters (final parameters when no validation set is given).
    """
    t0 = time.time()
    model = network.Model(train_ds.view_dims, train_ds.c, cfg.d_e, cfg.g, cfg.k,
                          hidden=cfg.hidden, seed=cfg.seed,
                          use_codebook=not cfg.no_vq, dtype=cfg.dtype)
    fus = fus_mod.FusionState(global_correlation_for(train_ds, cfg), tau=cfg.tau)
    opt = AdamW(model.named_parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    report = ExperimentReport(config=asdict(cfg))

    best_ap, best_state, best_qema, best_epoch = -np.inf, None, None, 0
    for epoch in range(1, cfg.epochs + 1):
        shuffle_seed = (cfg.seed * 1_000_003 + epoch) % (2 ** 63)
        batch_reports = []
        for b_idx, batch in enumerate(iterate_batches(train_ds, cfg.batch_size,
                                                      shuffle_seed=shuffle_seed)):
            with dc.Tape():
                try:
                    out = compute_losses(model, batch, fus, cfg)
                except NumericError as err:
                    raise NumericError(f"epoch {epoch} batch {b_idx}: {err}") from err
                dc.backward(out.total)
            opt.step()
            opt.zero_grad()
            batch_reports.append(out.report)
        report.losses.append(_mean_report(batch_reports))
        report.q_history.append(None if fus.q_ema is None else fus.q_ema.tolist())

        util = None
        if val_ds is not None:
            if model.codebook is not None:
                model.codebook.reset_usage()
            scores = predict(model, fus, val_ds, cfg)
            if model.codebook is not None and model.codebook.lookups_recorded > 0:
                util = utilization(model.codebook)
            val_ap = evaluate_all(scores, val_ds.labels).ap
            report.val_ap.append(val_ap)
            if val_ap > best_ap:
                best_ap, best_epoch = val_ap, epoch
                best_state = _snapshot(model)
                best_qema = None if fus.q_ema is None else fus.q_ema.copy()
            elif epoch - best_epoch >= cfg.early_stop_patience:
                report.utilization.append(util)
                log.info("early stop at epoch %d (best %d, val AP %.4f)",
                         epoch, best_epoch, best_ap)
                break
        report.utilization.append(util)

    if best_state is not None:
        _restore(model, best_state)
        if best_qema is not None:
            fus.q_ema = best_qema
        report.best_epoch = best_epoch
    else:
        report.best_epoch = len(report.losses)

    report.wall_clock = time.time() - t0
    return make_checkpoint(model, fus, cfg), report


def _mean_report(batch_reports):
    rows = np.array([r.as_row() for r in batch_reports])
    mean = rows.mean(axis=0)
    return objectives.LossReport(l_c=mean[0], l_dis=mean[1], l_rec=mean[2],
                                 l_vq=mean[3], total=mean[4])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def make_checkpoint(model: network.Model, fus: fus_mod.FusionState,
                    cfg: TrainConfig):
    meta = {
        "view_dims": model.view_dims,
        "c": model.c,
        "config": _config_meta(cfg),
    }
    tensors = {name: p.values for name, p in model.named_parameters()}
    tensors["fusion.s_global"] = fus.s_global
    if fus.q_ema is not None:
        tensors["fusion.q_ema"] = fus.q_ema
    return meta, tensors


def _config_meta(cfg):
    out = asdict(cfg)
    out["hidden"] = list(cfg.hidden)
    return out


def model_from_checkpoint(meta: dict, tensors: dict):
    """Rebuild (model, fusion state, config) from checkpoint content."""
    cfg_dict = dict(meta["config"])
    cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
    cfg = TrainConfig(**cfg_dict)
    model = network.Model(meta["view_dims"], meta["c"], cfg.d_e, cfg.g, cfg.k,
                          hidden=cfg.hidden, seed=0,
                          use_codebook=not cfg.no_vq, dtype=cfg.dtype)
    for name, p in model.named_parameters():
        if name not in tensors:
            raise DataLoadError(f"checkpoint lacks tensor {name}")
        if tensors[name].shape != p.values.shape:
            raise DataLoadError(
                f"checkpoint tensor {name} has shape {tensors[name].shape}, "
                f"model expects {p.values.shape}")
        p.values[...] = tensors[name].astype(cfg.dtype)
    if model.codebook is not None:
        model.codebook.initialized = True
    fus = fus_mod.FusionState(tensors["fusion.s_global"], tau=cfg.tau)
    if "fusion.q_ema" in tensors:
        fus.q_ema = tensors["fusion.q_ema"].copy()
    return model, fus, cfg


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def predict(model: network.Model, fus: fus_mod.FusionState,
            ds: MultiViewDataset, cfg: TrainConfig, batch_size=512) -> np.ndarray:
    """Fused scores for every sample, gradient-free."""
    chunks = []
    for batch in iterate_batches(ds, batch_size, shuffle_seed=None):
        state = network.forward_pass(model, batch, with_reconstruction=False)
        p_values = [p.values for p in state.p_full]
        if cfg.avg_fusion:
            weights = fus_mod.average_weights(batch.view_mask)
        elif cfg.weight_mode == "per_batch":
            _, weights = fus.batch_weights(p_values, batch.view_mask,
                                           update_ema=False)
        else:
            weights = fus.frozen_weights(batch.view_mask)
        chunks.append(fus_mod.fuse(p_values, weights))
    return np.vstack(chunks)


def evaluate(checkpoint, test_ds: MultiViewDataset,
             weight_mode: str | None = None) -> MetricReport:
    """Metrics of a checkpoint on a dataset with fully observed labels."""
    meta, tensors = checkpoint
    model, fus, cfg = model_from_checkpoint(meta, tensors)
    if weight_mode is not None:
        cfg = replace(cfg, weight_mode=weight_mode)
    scores = predict(model, fus, test_ds, cfg)
    return evaluate_all(scores, test_ds.labels)


# ---------------------------------------------------------------------------
# Experiment protocol and suites
# ---------------------------------------------------------------------------

def apply_protocol(ds: MultiViewDataset, cfg: TrainConfig):
    """Split, then apply dual missingness to the training side.

    The held-out side receives view missingness only: evaluation always uses
    fully observed ground-truth labels.
    """
    train_part, test_part = split(ds, cfg.train_fraction, cfg.seed)
    if cfg.view_missing > 0.0:
        train_part = simulate_missing_views(
            train_part, MissingnessSpec(view_missing_rate=cfg.view_missing,
                                        seed=cfg.seed + 1))
        test_part = simulate_missing_views(
            test_part, MissingnessSpec(view_missing_rate=cfg.view_missing,
                                       seed=cfg.seed + 3))
    if cfg.label_missing > 0.0:
        train_part = simulate_missing_labels(
            train_part, MissingnessSpec(label_missing_rate=cfg.label_missing,
                                        seed=cfg.seed + 2))
    return train_part, test_part


def run_protocol(cfg: TrainConfig, ds_full: MultiViewDataset):
    """Protocol + training + final evaluation; returns (ckpt, report)."""
    train_part, test_part = apply_protocol(ds_full, cfg)
    ckpt, report = train(cfg, train_part, test_part)
    report.final_metrics = evaluate(ckpt, test_part)
    return ckpt, report


def ablation_variants() -> dict:
    """The seven rows of the ablation table: full model plus six switches."""
    variants = {"full": {}}
    for flag in ABLATION_FLAGS:
        variants[flag] = {flag: True}
    return variants


def run_experiment_suite(cfg: TrainConfig, ds_full: MultiViewDataset,
                         variants: dict, seeds) -> dict:
    """(variant x seed) grid; per variant, mean and std of every metric.

    Failures are recorded per cell and the suite continues.
    """
    table = {}
    for name, overrides in variants.items():
        rows, errors = [], []
        for seed in seeds:
            run_cfg = replace(cfg, seed=int(seed), **overrides)
            try:
                _, report = run_protocol(run_cfg, ds_full)
                rows.append(report.final_metrics.as_dict())
            except Exception as err:  # suite keeps going
                log.warning("suite cell (%s, seed=%s) failed: %s", name, seed, err)
                errors.append(f"seed={seed}: {err}")
        entry = {"runs": rows, "errors": errors}
        if rows:
            for key in MetricReport.names():
                vals = np.array([r[key] for r in rows])
                entry[f"{key}_mean"] = float(vals.mean())
                entry[f"{key}_std"] = float(vals.std())
        table[name] = entry
    return table


def run_sweep(cfg: TrainConfig, ds_full: MultiViewDataset, axis: str,
              values, seeds) -> dict:
    """Degradation sweeps over view_missing / label_missing / train_fraction."""
    if axis not in ("view_missing", "label_missing", "train_fraction"):
        raise ParameterError(f"unknown sweep axis {axis}")
    variants = {f"{axis}={v}": {axis: float(v)} for v in values}
    return run_experiment_suite(cfg, ds_full, variants, seeds)


# ---------------------------------------------------------------------------
# Run directory artifacts
# ---------------------------------------------------------------------------

def write_losses_csv(path, report: ExperimentReport):
    lines = ["epoch,l_c,l_dis,l_rec,l_vq,total"]
    for i, row in enumerate(report.losses, start=1):
        lines.append(f"{i}," + ",".join(f"{v:.17g}" for v in row.as_row()))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_utilization_csv(path, report: ExperimentReport):
    lines = ["epoch,utilization"]
    for i, u in enumerate(report.utilization, start=1):
        lines.append(f"{i},{'' if u is None else format(u, '.6f')}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_q_history_csv(path, report: ExperimentReport):
    m = max((len(q) for q in report.q_history if q), default=0)
    lines = ["epoch," + ",".join(f"q_view{v}" for v in range(m))]
    for i, q in enumerate(report.q_history, start=1):
        row = "," * max(m - 1, 0) if q is None else ",".join(f"{x:.10g}" for x in q)
        lines.append(f"{i},{row}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_run_dir(run_dir, ckpt, report: ExperimentReport):
    import json
    from pathlib import Path
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.bin", *ckpt)
    write_losses_csv(out / "losses.csv", report)
    write_utilization_csv(out / "utilization.csv", report)
    write_q_history_csv(out / "q_history.csv", report)
    (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2),
                                     encoding="utf-8")
    return out
