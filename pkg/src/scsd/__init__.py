"""Incomplete multi-view multi-label classification with a shared discrete
codebook, label-correlation-weighted decision fusion, and fused-teacher
self-distillation."""

from .data import (Batch, MissingnessSpec, MultiViewDataset, iterate_batches,
                   load_dataset, save_dataset, simulate_missing_labels,
                   simulate_missing_views, split)
from .metrics import MetricReport, evaluate_all
from .network import Model
from .synthetic import make_synthetic_dataset
from .trainer import (TrainConfig, evaluate, run_experiment_suite, run_protocol,
                      train)

__all__ = [
    "Batch", "MissingnessSpec", "MultiViewDataset", "iterate_batches",
    "load_dataset", "save_dataset", "simulate_missing_labels",
    "simulate_missing_views", "split", "MetricReport", "evaluate_all", "Model",
    "make_synthetic_dataset", "TrainConfig", "evaluate",
    "run_experiment_suite", "run_protocol", "train",
]

__version__ = "0.1.0"
