import numpy as np
import pytest

from scsd import metrics
from scsd.errors import MetricError

# ---------------------------------------------------------------------------
# Independent exhaustive-enumeration references (shared tie conventions:
# descending scores with ascending-index tie break; pair ties worth 1/2).
# ---------------------------------------------------------------------------


def ref_rank(scores, j):
    """1-based rank of label j: labels ahead have higher score, or equal score
    and smaller index."""
    r = 1
    for o in range(len(scores)):
        if o == j:
            continue
        if scores[o] > scores[j] or (scores[o] == scores[j] and o < j):
            r += 1
    return r


def ref_average_precision(p, y):
    per_sample = []
    for i in range(p.shape[0]):
        pos = [j for j in range(p.shape[1]) if y[i, j] == 1]
        if not pos:
            continue
        ranks = {j: ref_rank(p[i], j) for j in range(p.shape[1])}
        precs = []
        for j in pos:
            ahead = sum(1 for o in pos if ranks[o] <= ranks[j])
            precs.append(ahead / ranks[j])
        per_sample.append(sum(precs) / len(precs))
    return sum(per_sample) / len(per_sample)


def ref_hamming(p, y):
    mistakes = sum(int((p[i, j] >= 0.5) != (y[i, j] == 1))
                   for i in range(p.shape[0]) for j in range(p.shape[1]))
    return 1.0 - mistakes / p.size


def ref_ranking_loss(p, y):
    vals = []
    for i in range(p.shape[0]):
        pos = [j for j in range(p.shape[1]) if y[i, j] == 1]
        neg = [j for j in range(p.shape[1]) if y[i, j] == 0]
        if not pos or not neg:
            continue
        bad = 0.0
        for a in pos:
            for b in neg:
                if p[i, a] < p[i, b]:
                    bad += 1.0
                elif p[i, a] == p[i, b]:
                    bad += 0.5
        vals.append(bad / (len(pos) * len(neg)))
    return 1.0 - sum(vals) / len(vals)


def ref_auc(p, y):
    vals = []
    for j in range(p.shape[1]):
        pos = [i for i in range(p.shape[0]) if y[i, j] == 1]
        neg = [i for i in range(p.shape[0]) if y[i, j] == 0]
        if not pos or not neg:
            continue
        good = 0.0
        for a in pos:
            for b in neg:
                if p[a, j] > p[b, j]:
                    good += 1.0
                elif p[a, j] == p[b, j]:
                    good += 0.5
        vals.append(good / (len(pos) * len(neg)))
    return sum(vals) / len(vals)


def ref_one_error(p, y):
    hits, n = 0, 0
    for i in range(p.shape[0]):
        pos = [j for j in range(p.shape[1]) if y[i, j] == 1]
        if not pos:
            continue
        n += 1
        best = 0
        for j in range(1, p.shape[1]):
            if p[i, j] > p[i, best]:
                best = j
        hits += int(y[i, best] == 1)
    return hits / n


def ref_coverage(p, y):
    c = p.shape[1]
    vals = []
    for i in range(p.shape[0]):
        pos = [j for j in range(c) if y[i, j] == 1]
        if not pos:
            continue
        deepest = max(ref_rank(p[i], j) for j in pos)
        vals.append((deepest - 1) / c)
    return 1.0 - sum(vals) / len(vals)


REFS = {
    "ap": (metrics.average_precision, ref_average_precision),
    "one_minus_hl": (metrics.hamming, ref_hamming),
    "one_minus_rl": (metrics.ranking_loss, ref_ranking_loss),
    "auc": (metrics.auc, ref_auc),
    "one_minus_oe": (metrics.one_error, ref_one_error),
    "one_minus_cov": (metrics.coverage, ref_coverage),
}


class TestHandCases:
    P = np.array([[0.9, 0.8, 0.3, 0.1]])
    Y = np.array([[1, 0, 1, 0]])

    def test_ap(self):
        assert abs(metrics.average_precision(self.P, self.Y) - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12

    def test_ap_perfect(self):
        assert metrics.average_precision(np.array([[0.9, 0.8, 0.1]]),
                                         np.array([[1, 1, 0]])) == 1.0

    def test_ap_single_positive_last(self):
        assert metrics.average_precision(np.array([[0.9, 0.8, 0.7, 0.1]]),
                                         np.array([[0, 0, 0, 1]])) == 0.25

    def test_hamming(self):
        p = np.array([[0.9, 0.1], [0.2, 0.8]])
        y = np.array([[1, 0], [0, 1]])
        assert metrics.hamming(p, y) == 1.0
        y2 = np.array([[0, 0], [0, 0]])
        assert metrics.hamming(p, y2) == 0.5
        assert metrics.hamming(p, 1 - np.array([[1, 0], [0, 1]])) == 0.0

    def test_ranking_loss(self):
        assert abs(metrics.ranking_loss(self.P, self.Y) - 0.75) < 1e-12
        ties = np.array([[0.5, 0.5, 0.5]])
        assert metrics.ranking_loss(ties, np.array([[1, 0, 1]])) == 0.5

    def test_auc_pairs(self):
        p = np.array([[0.1], [0.9], [0.5], [0.4]])
        y = np.array([[0], [1], [1], [0]])
        assert metrics.auc(p, y) == 1.0

    def test_one_error(self):
        p = np.array([[0.9, 0.1], [0.1, 0.9]])
        y = np.array([[1, 0], [1, 0]])
        assert metrics.one_error(p, y) == 0.5

    def test_one_error_tie_breaks_ascending(self):
        p = np.array([[0.5, 0.5]])
        assert metrics.one_error(p, np.array([[1, 0]])) == 1.0
        assert metrics.one_error(p, np.array([[0, 1]])) == 0.0

    def test_coverage(self):
        assert abs(metrics.coverage(self.P, self.Y) - 0.5) < 1e-12

    def test_coverage_best_case(self):
        assert metrics.coverage(np.array([[0.9, 0.2, 0.1]]),
                                np.array([[1, 0, 0]])) == 1.0

    def test_coverage_worst_positions(self):
        out = metrics.coverage(np.array([[0.9, 0.8, 0.1]]), np.array([[0, 0, 1]]))
        assert abs(out - (1.0 - 2.0 / 3.0)) < 1e-12


class TestOracleEquivalence:
    @pytest.mark.parametrize("name", sorted(REFS))
    def test_matches_reference_on_random_instances(self, name):
        ours, ref = REFS[name]
        rng = np.random.Generator(np.random.PCG64(777))
        checked = 0
        for _ in range(200):
            p = np.round(rng.random((6, 5)), 2)  # rounding forces score ties
            y = (rng.random((6, 5)) < 0.4).astype(int)
            try:
                mine = ours(p, y)
            except MetricError:
                continue
            checked += 1
            assert mine == pytest.approx(ref(p, y), abs=1e-12)
        assert checked > 150


class TestProperties:
    def test_rank_metrics_invariant_under_monotone_transform(self, rng):
        p = rng.random((8, 6))
        y = (rng.random((8, 6)) < 0.4).astype(int)
        y[y.sum(axis=1) == 0, 0] = 1
        y[y.sum(axis=1) == y.shape[1], 1] = 0
        transformed = np.exp(3.0 * p) + 1.0
        for name in ("ap", "one_minus_rl", "auc", "one_minus_oe", "one_minus_cov"):
            fn = REFS[name][0]
            assert fn(p, y) == pytest.approx(fn(transformed, y), abs=1e-12)

    def test_auc_flip_symmetry(self, rng):
        p = rng.random((10, 4))
        y = (rng.random((10, 4)) < 0.5).astype(int)
        y[:, 0] = [1, 0] * 5  # guarantee one mixed column
        assert metrics.auc(p, y) + metrics.auc(p, 1 - y) == pytest.approx(1.0)

    def test_all_reported_values_in_unit_interval(self, rng):
        for _ in range(20):
            p = rng.random((6, 5))
            y = (rng.random((6, 5)) < 0.5).astype(int)
            y[y.sum(axis=1) == 0, 0] = 1
            y[:, 0] = [0, 1, 0, 1, 0, 1]
            report = metrics.evaluate_all(p, y)
            for key, val in report.as_dict().items():
                if key != "n_eval":
                    assert 0.0 <= val <= 1.0

    def test_eligibility_errors(self):
        with pytest.raises(MetricError):
            metrics.average_precision(np.ones((2, 2)), np.zeros((2, 2)))
        with pytest.raises(MetricError):
            metrics.ranking_loss(np.ones((1, 2)), np.ones((1, 2)))
        with pytest.raises(MetricError):
            metrics.auc(np.ones((2, 2)), np.ones((2, 2)))
