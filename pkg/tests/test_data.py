import numpy as np
import pytest

from scsd.data import (Batch, MissingnessSpec, MultiViewDataset, iterate_batches,
                       load_dataset, save_dataset, simulate_missing_labels,
                       simulate_missing_views, split)
from scsd.errors import DataLoadError, ParameterError


def toy_dataset(n=10, m=2, c=3, seed=7):
    rng = np.random.Generator(np.random.PCG64(seed))
    views = [rng.standard_normal((n, 4 + v)) for v in range(m)]
    labels = (rng.random((n, c)) < 0.4).astype(float)
    return MultiViewDataset(views=views, labels=labels,
                            view_mask=np.ones((n, m)), label_mask=np.ones((n, c)),
                            label_names=[f"l{j}" for j in range(c)])


class TestModel:
    def test_validation_catches_row_mismatch(self):
        with pytest.raises(DataLoadError):
            MultiViewDataset(views=[np.zeros((3, 2)), np.zeros((4, 2))],
                             labels=np.zeros((3, 2)), view_mask=np.ones((3, 2)),
                             label_mask=np.ones((3, 2)))

    def test_validation_catches_nonbinary_labels(self):
        with pytest.raises(DataLoadError):
            MultiViewDataset(views=[np.zeros((2, 2))], labels=np.full((2, 1), 0.5),
                             view_mask=np.ones((2, 1)), label_mask=np.ones((2, 1)))

    def test_validation_catches_all_missing_row(self):
        with pytest.raises(DataLoadError):
            MultiViewDataset(views=[np.zeros((2, 2))], labels=np.zeros((2, 1)),
                             view_mask=np.array([[1.0], [0.0]]),
                             label_mask=np.ones((2, 1)))

    def test_arrays_frozen(self):
        ds = toy_dataset()
        with pytest.raises(ValueError):
            ds.labels[0, 0] = 1.0


class TestStorage:
    def test_load_well_formed(self, tmp_path):
        ds = toy_dataset()
        save_dataset(ds, tmp_path / "d")
        loaded = load_dataset(tmp_path / "d")
        assert loaded.m == 2 and loaded.n == 10 and loaded.c == 3
        assert loaded.label_names == ds.label_names

    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(0))
        # float32-representable values survive the interchange format exactly
        views = [rng.standard_normal((6, 3)).astype(np.float32).astype(np.float64)]
        ds = MultiViewDataset(views=views, labels=(rng.random((6, 2)) < 0.5).astype(float),
                              view_mask=np.ones((6, 1)), label_mask=np.ones((6, 2)))
        save_dataset(ds, tmp_path / "d")
        again = load_dataset(tmp_path / "d")
        assert np.array_equal(again.views[0], ds.views[0])
        assert np.array_equal(again.labels, ds.labels)
        save_dataset(again, tmp_path / "d2")
        assert (tmp_path / "d" / "view_0.f32").read_bytes() == \
               (tmp_path / "d2" / "view_0.f32").read_bytes()

    def test_row_count_mismatch_names_file(self, tmp_path):
        ds = toy_dataset(n=10)
        save_dataset(ds, tmp_path / "d")
        labels = np.fromfile(tmp_path / "d" / "labels.u8", dtype=np.uint8)
        labels[: ds.c * 9].tofile(tmp_path / "d" / "labels.u8")
        with pytest.raises(DataLoadError, match="labels.u8"):
            load_dataset(tmp_path / "d")

    def test_missing_file(self, tmp_path):
        ds = toy_dataset()
        save_dataset(ds, tmp_path / "d")
        (tmp_path / "d" / "view_1.f32").unlink()
        with pytest.raises(DataLoadError, match="view_1"):
            load_dataset(tmp_path / "d")


class TestSimulateViews:
    def test_rate_zero_unchanged(self):
        ds = toy_dataset()
        out = simulate_missing_views(ds, MissingnessSpec(seed=1))
        assert np.array_equal(out.view_mask, np.ones((10, 2)))

    def test_global_rate(self):
        ds = toy_dataset(n=2000, m=6)
        out = simulate_missing_views(
            ds, MissingnessSpec(view_missing_rate=0.5, seed=3))
        frac = 1.0 - out.view_mask.mean()
        assert abs(frac - 0.5) < 0.02

    def test_rowwise_constraint_many_seeds(self):
        ds = toy_dataset(n=20, m=3)
        for seed in range(1000):
            out = simulate_missing_views(
                ds, MissingnessSpec(view_missing_rate=0.6, seed=seed))
            assert out.view_mask.sum(axis=1).min() >= 1

    def test_masked_rows_zero_filled(self):
        ds = toy_dataset(n=50, m=2)
        out = simulate_missing_views(
            ds, MissingnessSpec(view_missing_rate=0.5, seed=9))
        for v in range(2):
            gone = out.view_mask[:, v] == 0
            assert np.all(out.views[v][gone] == 0.0)
            kept = ~gone
            assert np.array_equal(out.views[v][kept], ds.views[v][kept])

    def test_deterministic(self):
        ds = toy_dataset(n=100, m=3)
        spec = MissingnessSpec(view_missing_rate=0.4, seed=11)
        a = simulate_missing_views(ds, spec)
        b = simulate_missing_views(ds, spec)
        assert np.array_equal(a.view_mask, b.view_mask)
        assert all(np.array_equal(x, y) for x, y in zip(a.views, b.views))

    def test_rate_validation(self):
        with pytest.raises(ParameterError):
            MissingnessSpec(view_missing_rate=1.0)


class TestSimulateLabels:
    def test_rate_zero_unchanged(self):
        ds = toy_dataset()
        out = simulate_missing_labels(ds, MissingnessSpec(seed=1))
        assert np.array_equal(out.label_mask, np.ones((10, 3)))

    def test_rate_overall_and_per_class(self):
        ds = toy_dataset(n=2000, c=5)  # 10000 entries
        out = simulate_missing_labels(
            ds, MissingnessSpec(label_missing_rate=0.5, seed=5))
        zero_frac = 1.0 - out.label_mask.mean()
        assert abs(zero_frac - 0.5) < 0.02
        pos = ds.labels == 1.0
        neg = ~pos
        assert abs((out.label_mask[pos] == 0).mean() - 0.5) < 0.05
        assert abs((out.label_mask[neg] == 0).mean() - 0.5) < 0.05

    def test_masked_entries_zeroed(self):
        ds = toy_dataset(n=100)
        out = simulate_missing_labels(
            ds, MissingnessSpec(label_missing_rate=0.5, seed=2))
        assert np.all(out.labels[out.label_mask == 0.0] == 0.0)

    def test_deterministic(self):
        ds = toy_dataset(n=100)
        spec = MissingnessSpec(label_missing_rate=0.3, seed=13)
        a = simulate_missing_labels(ds, spec)
        b = simulate_missing_labels(ds, spec)
        assert np.array_equal(a.label_mask, b.label_mask)
        assert np.array_equal(a.labels, b.labels)


class TestSplit:
    def test_sizes(self):
        tr, te = split(toy_dataset(n=10), 0.7, seed=0)
        assert tr.n == 7 and te.n == 3

    def test_partition(self):
        ds = toy_dataset(n=23)
        marker = np.arange(23, dtype=float)
        ds = MultiViewDataset(views=[marker[:, None]], labels=ds.labels[:, :1] * 0,
                              view_mask=np.ones((23, 1)), label_mask=np.ones((23, 1)))
        tr, te = split(ds, 0.6, seed=4)
        ids = np.concatenate([tr.views[0][:, 0], te.views[0][:, 0]])
        assert sorted(ids.tolist()) == list(range(23))

    def test_deterministic(self):
        ds = toy_dataset(n=40)
        a1, b1 = split(ds, 0.7, seed=6)
        a2, b2 = split(ds, 0.7, seed=6)
        assert np.array_equal(a1.labels, a2.labels)
        assert np.array_equal(b1.labels, b2.labels)

    def test_degenerate_rejected(self):
        with pytest.raises(ParameterError):
            split(toy_dataset(n=10), 0.05, seed=0)


class TestBatches:
    def test_sizes(self):
        ds = toy_dataset(n=5)
        sizes = [b.size for b in iterate_batches(ds, 2)]
        assert sizes == [2, 2, 1]

    def test_epoch_is_permutation(self):
        ds = toy_dataset(n=17)
        idx = np.concatenate([b.indices for b in iterate_batches(ds, 4, shuffle_seed=3)])
        assert sorted(idx.tolist()) == list(range(17))

    def test_natural_order_without_shuffle(self):
        ds = toy_dataset(n=6)
        idx = np.concatenate([b.indices for b in iterate_batches(ds, 4)])
        assert idx.tolist() == list(range(6))

    def test_batch_size_validation(self):
        with pytest.raises(ParameterError):
            list(iterate_batches(toy_dataset(), 0))
