import numpy as np
import pytest

from scsd import fusion
from scsd.errors import ContractError


class TestGlobalCorrelation:
    def test_disjoint_singletons_give_identity(self):
        y = np.eye(4)
        s = fusion.global_label_correlation(y)
        assert np.allclose(s, np.eye(4), atol=1e-6)

    def test_hand_case(self):
        y = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
        s = fusion.global_label_correlation(y)
        assert abs(s[0, 1] - 0.5) < 1e-7
        assert abs(s[1, 0] - 1.0) < 1e-7

    def test_absent_label_row_near_zero(self):
        y = np.array([[1.0, 0.0], [1.0, 0.0]])
        s = fusion.global_label_correlation(y)
        assert np.all(np.abs(s[1]) < 1e-6)


class TestBatchCorrelation:
    def test_equals_global_formula_when_all_present(self):
        y = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]])
        w_col = np.ones(3)
        assert np.allclose(fusion.batch_prediction_correlation(y, w_col),
                           fusion.global_label_correlation(y))

    def test_all_rows_masked_gives_near_zero(self):
        p = np.random.default_rng(0).random((4, 3))
        s = fusion.batch_prediction_correlation(p, np.zeros(4))
        assert np.all(np.abs(s) < 1e-6)

    def test_hand_case(self):
        p = np.array([[0.8, 0.4], [0.2, 0.6]])
        s = fusion.batch_prediction_correlation(p, np.ones(2))
        assert abs(s[0, 1] - 0.44 / 0.68) < 1e-6


class TestNormalize:
    def test_symmetric_row_stochastic_fixed_point(self):
        s = np.array([[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(fusion.normalize_correlation(s), s)

    def test_hand_case(self):
        s = np.array([[0.0, 2.0], [0.0, 0.0]])
        assert np.allclose(fusion.normalize_correlation(s),
                           [[0.0, 1.0], [1.0, 0.0]])

    def test_zero_matrix(self):
        z = np.zeros((3, 3))
        assert np.array_equal(fusion.normalize_correlation(z), z)


class TestQualityAndWeights:
    def test_equal_quality_uniform_weights(self):
        q = np.array([-0.3, -0.3, -0.3])
        w = fusion.view_weights(q, np.ones((4, 3)), tau=1.0)
        assert np.allclose(w, 1.0 / 3.0)

    def test_missing_views_get_zero(self):
        q = np.array([0.0, -1.0])
        mask = np.array([[1.0, 0.0], [1.0, 1.0]])
        w = fusion.view_weights(q, mask, tau=1.0)
        assert w[0].tolist() == [1.0, 0.0]

    def test_hand_softmax(self):
        w = fusion.view_weights(np.array([0.0, -1.0]), np.ones((1, 2)), tau=1.0)
        assert abs(w[0, 0] - 0.7310585786300049) < 1e-4
        assert abs(w[0, 1] - 0.2689414213699951) < 1e-4

    def test_rows_sum_to_one(self, rng):
        q = -rng.random(4)
        mask = (rng.random((50, 4)) < 0.6).astype(float)
        mask[mask.sum(axis=1) == 0, 0] = 1.0
        w = fusion.view_weights(q, mask, tau=0.7)
        assert np.all(np.abs(w.sum(axis=1) - 1.0) < 1e-12)
        assert np.all(w[mask == 0.0] == 0.0)

    def test_quality_scores_nonpositive(self, rng):
        s_norm = fusion.normalize_correlation(rng.random((3, 3)))
        s_views = [fusion.normalize_correlation(rng.random((3, 3))) for _ in range(4)]
        q = fusion.quality_scores(s_views, s_norm)
        assert np.all(q <= 0.0)

    def test_temperature_monotonicity(self):
        q = np.array([-0.2, -0.9])
        mask = np.ones((1, 2))
        ratios = []
        for tau in (2.0, 1.0, 0.5, 0.25):
            w = fusion.view_weights(q, mask, tau)
            ratios.append(w[0, 0] / w[0, 1])
        assert all(r2 > r1 for r1, r2 in zip(ratios, ratios[1:]))

    def test_scale_cancellation_bitwise(self):
        # power-of-two rescaling of q and tau is exact in IEEE arithmetic
        q = np.array([-0.37, -1.82, -0.05])
        mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
        base = fusion.view_weights(q, mask, tau=0.75)
        for c in (0.5, 2.0, 8.0):
            scaled = fusion.view_weights(q * c, mask, tau=0.75 * c)
            assert np.array_equal(base, scaled)

    def test_no_available_view_rejected(self):
        with pytest.raises(ContractError):
            fusion.view_weights(np.array([0.0]), np.zeros((1, 1)), tau=1.0)


class TestFusion:
    def test_single_view_passthrough(self):
        p = [np.array([[0.3, 0.9]]), np.array([[0.0, 0.0]])]
        w = np.array([[1.0, 0.0]])
        assert np.allclose(fusion.fuse(p, w), p[0])

    def test_equal_weights_mean(self):
        p = [np.array([[0.2, 0.8]]), np.array([[0.6, 0.4]])]
        w = np.array([[0.5, 0.5]])
        assert np.allclose(fusion.fuse(p, w), [[0.4, 0.6]])

    def test_hand_case(self):
        p = [np.array([[0.9, 0.1]]), np.array([[0.1, 0.9]])]
        w = fusion.view_weights(np.array([0.0, -1.0]), np.ones((1, 2)), tau=1.0)
        fused = fusion.fuse(p, w)
        assert abs(fused[0, 0] - 0.6849) < 1e-4

    def test_convexity_bounds(self, rng):
        m = 3
        p = [rng.random((20, 5)) for _ in range(m)]
        mask = (rng.random((20, m)) < 0.7).astype(float)
        mask[mask.sum(axis=1) == 0, 0] = 1.0
        w = fusion.view_weights(-rng.random(m), mask, tau=1.0)
        fused = fusion.fuse(p, w)
        stacked = np.stack(p)
        big = np.where(mask.T[:, :, None] == 1.0, stacked, -np.inf).max(axis=0)
        small = np.where(mask.T[:, :, None] == 1.0, stacked, np.inf).min(axis=0)
        assert np.all(fused <= big + 1e-12)
        assert np.all(fused >= small - 1e-12)


class TestMaskedAverage:
    def test_all_present_is_mean(self):
        p = [np.array([[0.2, 0.8]]), np.array([[0.6, 0.4]])]
        out = fusion.masked_average_fuse(p, np.ones((1, 2)))
        assert np.allclose(out, [[0.4, 0.6]])

    def test_single_view_passthrough(self):
        p = [np.array([[0.25, 0.5]]), np.array([[0.9, 0.9]])]
        out = fusion.masked_average_fuse(p, np.array([[0.0, 1.0]]))
        assert np.allclose(out, p[1])

    def test_matches_formula_on_random_inputs(self, rng):
        m, n, c = 4, 30, 6
        p = [rng.random((n, c)) for _ in range(m)]
        mask = (rng.random((n, m)) < 0.5).astype(float)
        mask[mask.sum(axis=1) == 0, 2] = 1.0
        out = fusion.masked_average_fuse(p, mask)
        expected = np.zeros((n, c))
        for i in range(n):
            expected[i] = sum(p[v][i] * mask[i, v] for v in range(m)) / mask[i].sum()
        assert np.allclose(out, expected, atol=1e-12)

    def test_no_view_rejected(self):
        with pytest.raises(ContractError):
            fusion.masked_average_fuse([np.ones((1, 2))], np.zeros((1, 1)))


class TestFusionState:
    def test_ema_updates(self, rng):
        y = (rng.random((30, 4)) < 0.4).astype(float)
        fs = fusion.FusionState(fusion.global_label_correlation(y), tau=1.0)
        p = [rng.random((10, 4)) for _ in range(2)]
        mask = np.ones((10, 2))
        q1, _ = fs.batch_weights(p, mask)
        assert np.array_equal(fs.q_ema, q1)
        q2, _ = fs.batch_weights([x * 0.5 for x in p], mask)
        assert np.allclose(fs.q_ema, 0.9 * q1 + 0.1 * q2)

    def test_frozen_requires_history(self):
        fs = fusion.FusionState(np.eye(3))
        with pytest.raises(ContractError):
            fs.frozen_weights(np.ones((2, 3)))
