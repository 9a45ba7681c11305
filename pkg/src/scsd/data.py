"""Incomplete multi-view multi-label data: model, simulators, storage, batching.

A dataset holds m feature views X^(v) (n x d_v), binary labels Y (n x c), a
view indicator W (n x m) and a label indicator G (n x c). Missing views and
labels are zero-filled, every sample keeps at least one observed view, and all
arrays are frozen after construction so datasets can be shared freely.

Native on-disk format (one directory):
    manifest          UTF-8 text, ``key value`` lines (see save_dataset)
    view_<v>.f32      little-endian float32, row-major, n x d_v
    labels.u8         n x c bytes of 0/1
    view_mask.u8      optional, n x m bytes of 0/1
    label_mask.u8     optional, n x c bytes of 0/1
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataLoadError, ParameterError

MANIFEST_NAME = "manifest"
_MAGIC_LINE = "scsd-dataset v1"

log = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MultiViewDataset:
    """Views, labels and the two missingness indicator matrices."""

    views: list          # m arrays of shape (n, d_v), float
    labels: np.ndarray   # (n, c) in {0, 1}
    view_mask: np.ndarray   # (n, m) in {0, 1}
    label_mask: np.ndarray  # (n, c) in {0, 1}
    label_names: list | None = None

    def __post_init__(self):
        object.__setattr__(self, "views", [_frozen(v.astype(np.float64, copy=True))
                                           for v in self.views])
        object.__setattr__(self, "labels", _frozen(self.labels.astype(np.float64, copy=True)))
        object.__setattr__(self, "view_mask", _frozen(self.view_mask.astype(np.float64, copy=True)))
        object.__setattr__(self, "label_mask", _frozen(self.label_mask.astype(np.float64, copy=True)))
        self.validate()

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def m(self):
        return len(self.views)

    @property
    def c(self):
        return self.labels.shape[1]

    @property
    def view_dims(self):
        return [v.shape[1] for v in self.views]

    def validate(self):
        n = self.labels.shape[0]
        for v, x in enumerate(self.views):
            if x.ndim != 2 or x.shape[0] != n:
                raise DataLoadError(f"view {v}: expected {n} rows, got {x.shape}")
        if self.view_mask.shape != (n, self.m):
            raise DataLoadError(f"view_mask shape {self.view_mask.shape} != {(n, self.m)}")
        if self.label_mask.shape != self.labels.shape:
            raise DataLoadError("label_mask shape differs from labels")
        for name, arr in (("labels", self.labels), ("view_mask", self.view_mask),
                          ("label_mask", self.label_mask)):
            if not np.all((arr == 0.0) | (arr == 1.0)):
                raise DataLoadError(f"{name} contains non-binary entries")
        if np.any(self.view_mask.sum(axis=1) < 1):
            raise DataLoadError("some sample has no observed view")
        for v, x in enumerate(self.views):
            if np.any(x[self.view_mask[:, v] == 0.0] != 0.0):
                raise DataLoadError(f"view {v}: masked rows are not zero-filled")
        if np.any(self.labels[self.label_mask == 0.0] != 0.0):
            raise DataLoadError("masked label entries are not zero-filled")

    def observed_labels(self) -> np.ndarray:
        """Y with unobserved entries forced to zero (no-op on valid data)."""
        return self.labels * self.label_mask

    def subset(self, rows: np.ndarray) -> "MultiViewDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return MultiViewDataset(
            views=[v[rows] for v in self.views],
            labels=self.labels[rows],
            view_mask=self.view_mask[rows],
            label_mask=self.label_mask[rows],
            label_names=self.label_names,
        )


@dataclass(frozen=True)
class MissingnessSpec:
    """Rates and seed for the dual-missing simulators."""

    view_missing_rate: float = 0.0
    label_missing_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("view_missing_rate", "label_missing_rate"):
            r = getattr(self, name)
            if not (0.0 <= r < 1.0):
                raise ParameterError(f"{name} must be in [0, 1), got {r}")


@dataclass
class Batch:
    """Index-aligned slices of one mini-batch."""

    indices: np.ndarray
    views: list
    labels: np.ndarray
    view_mask: np.ndarray
    label_mask: np.ndarray

    @property
    def size(self):
        return len(self.indices)

    def observed_labels(self) -> np.ndarray:
        return self.labels * self.label_mask


# ---------------------------------------------------------------------------
# Storage
# ---------------------------------------------------------------------------

def save_dataset(ds: MultiViewDataset, path) -> None:
    """Write the native directory format; float features are stored as f32."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lines = [_MAGIC_LINE, f"n {ds.n}", f"m {ds.m}", f"c {ds.c}"]
    for v, x in enumerate(ds.views):
        fname = f"view_{v}.f32"
        lines.append(f"view {v} d {x.shape[1]} file {fname}")
        x.astype("<f4").tofile(out / fname)
    lines.append("labels file labels.u8")
    ds.labels.astype(np.uint8).tofile(out / "labels.u8")
    lines.append("view_mask file view_mask.u8")
    ds.view_mask.astype(np.uint8).tofile(out / "view_mask.u8")
    lines.append("label_mask file label_mask.u8")
    ds.label_mask.astype(np.uint8).tofile(out / "label_mask.u8")
    if ds.label_names:
        lines.append("label_names " + ",".join(ds.label_names))
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_matrix(path: Path, dtype, n, d, what):
    if not path.exists():
        raise DataLoadError(f"missing file: {path}")
    raw = np.fromfile(path, dtype=dtype)
    if raw.size != n * d:
        raise DataLoadError(
            f"{what} {path.name}: expected {n}x{d} entries, file holds {raw.size}")
    return raw.reshape(n, d)


def load_dataset(path) -> MultiViewDataset:
    """Load and validate a native dataset directory."""
    root = Path(path)
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise DataLoadError(f"missing file: {manifest}")
    n = m = c = None
    view_entries = {}
    files = {}
    label_names = None
    for raw_line in manifest.read_text(encoding="utf-8").splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#") or line == _MAGIC_LINE:
            continue
        parts = line.split()
        if parts[0] == "n":
            n = int(parts[1])
        elif parts[0] == "m":
            m = int(parts[1])
        elif parts[0] == "c":
            c = int(parts[1])
        elif parts[0] == "view":
            view_entries[int(parts[1])] = (int(parts[3]), parts[5])
        elif parts[0] in ("labels", "view_mask", "label_mask"):
            files[parts[0]] = parts[2]
        elif parts[0] == "label_names":
            label_names = line.split(None, 1)[1].split(",")
        else:
            raise DataLoadError(f"{manifest.name}: unrecognized line {line!r}")
    if n is None or m is None or c is None:
        raise DataLoadError(f"{manifest.name}: n/m/c missing")
    if sorted(view_entries) != list(range(m)):
        raise DataLoadError(f"{manifest.name}: expected views 0..{m - 1}")
    if "labels" not in files:
        raise DataLoadError(f"{manifest.name}: no labels entry")

    views = []
    for v in range(m):
        d_v, fname = view_entries[v]
        views.append(_read_matrix(root / fname, "<f4", n, d_v, "view").astype(np.float64))
    labels = _read_matrix(root / files["labels"], np.uint8, n, c, "labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataLoadError(f"{files['labels']}: non-binary label entries")
    if "view_mask" in files:
        view_mask = _read_matrix(root / files["view_mask"], np.uint8, n, m, "view_mask")
    else:
        view_mask = np.ones((n, m), dtype=np.uint8)
    if "label_mask" in files:
        label_mask = _read_matrix(root / files["label_mask"], np.uint8, n, c, "label_mask")
    else:
        label_mask = np.ones((n, c), dtype=np.uint8)
    return MultiViewDataset(views=views, labels=labels.astype(np.float64),
                            view_mask=view_mask.astype(np.float64),
                            label_mask=label_mask.astype(np.float64),
                            label_names=label_names)


def dataset_checksums(path) -> dict:
    """sha256 of every data file in a dataset directory (manifest included)."""
    root = Path(path)
    sums = {}
    for f in sorted(root.iterdir()):
        if f.is_file():
            sums[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    return sums


# ---------------------------------------------------------------------------
# Missing-data simulators
# ---------------------------------------------------------------------------

def simulate_missing_views(ds: MultiViewDataset, spec: MissingnessSpec) -> MultiViewDataset:
    """Discard views at the requested global rate, keeping >=1 view per row.

    Per row, one uniformly chosen view is always kept; each remaining view is
    dropped independently with probability rate*m/(m-1) so the expected
    fraction of zeros in W equals the rate. Deterministic in ``spec.seed``.
    """
    if not np.all(ds.view_mask == 1.0):
        raise ParameterError("simulate_missing_views expects a fully observed dataset")
    rate = spec.view_missing_rate
    m = ds.m
    if rate == 0.0:
        return ds
    p_drop = rate * m / (m - 1)
    if p_drop > 1.0:
        # With >=1 view kept per row the achievable rate caps at (m-1)/m.
        log.warning("view_missing_rate %.3f unreachable with m=%d; saturating at %.3f",
                    rate, m, (m - 1) / m)
        p_drop = 1.0
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    keep_one = rng.integers(0, m, size=ds.n)
    drops = rng.random((ds.n, m)) < p_drop
    mask = (~drops).astype(np.float64)
    mask[np.arange(ds.n), keep_one] = 1.0
    views = [np.where(mask[:, i:i + 1] == 1.0, v, 0.0) for i, v in enumerate(ds.views)]
    return MultiViewDataset(views=views, labels=ds.labels, view_mask=mask,
                            label_mask=ds.label_mask, label_names=ds.label_names)


def simulate_missing_labels(ds: MultiViewDataset, spec: MissingnessSpec) -> MultiViewDataset:
    """Hide label entries (positives and negatives alike) independently."""
    if not np.all(ds.label_mask == 1.0):
        raise ParameterError("simulate_missing_labels expects fully observed labels")
    rate = spec.label_missing_rate
    if rate == 0.0:
        return ds
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    mask = (rng.random(ds.labels.shape) >= rate).astype(np.float64)
    return MultiViewDataset(views=list(ds.views),
                            labels=np.where(mask == 1.0, ds.labels, 0.0),
                            view_mask=ds.view_mask, label_mask=mask,
                            label_names=ds.label_names)


def split(ds: MultiViewDataset, train_fraction: float, seed: int):
    """Disjoint row partition of sizes floor(f*n) / remainder, seeded."""
    if not (0.0 < train_fraction < 1.0):
        raise ParameterError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(np.floor(train_fraction * ds.n))
    if n_train == 0 or n_train == ds.n:
        raise ParameterError(
            f"split of n={ds.n} at fraction {train_fraction} leaves an empty side")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(ds.n)
    train_rows = np.sort(perm[:n_train])
    test_rows = np.sort(perm[n_train:])
    return ds.subset(train_rows), ds.subset(test_rows)


def iterate_batches(ds: MultiViewDataset, batch_size: int, shuffle_seed=None):
    """Yield every sample exactly once; the last batch may be short.

    shuffle_seed None keeps natural index order; otherwise the epoch order is
    a seeded permutation.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle_seed is None:
        order = np.arange(ds.n)
    else:
        order = np.random.Generator(np.random.PCG64(shuffle_seed)).permutation(ds.n)
    for start in range(0, ds.n, batch_size):
        idx = order[start:start + batch_size]
        yield Batch(indices=idx,
                    views=[v[idx] for v in ds.views],
                    labels=ds.labels[idx],
                    view_mask=ds.view_mask[idx],
                    label_mask=ds.label_mask[idx])
