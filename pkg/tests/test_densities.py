import numpy as np
import pytest

from cohortnet.densities import (
    COV_REG,
    GMMModel,
    fit_gmm,
    fit_kde,
    fit_mnd,
    sample,
)


def two_cluster_data(n=400, d=3, gap=8.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.5, size=(n // 2, d))
    b = rng.normal(gap, 0.5, size=(n - n // 2, d))
    return np.vstack([a, b])


class TestMND:
    def test_hand_computed_2d_example(self):
        # deviations (-1,-1) and (1,1): every sample-covariance entry is 2
        model = fit_mnd(np.array([[0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_array_equal(model.mean, [1.0, 1.0])
        np.testing.assert_allclose(model.cov, np.full((2, 2), 2.0) + COV_REG * np.eye(2))

    def test_constant_data_samples_near_constant(self):
        model = fit_mnd(np.full((10, 4), 0.5))
        draws = sample(model, 1000, seed=1)
        np.testing.assert_allclose(draws, 0.5, atol=0.01)

    def test_sample_mean_within_3_standard_errors(self):
        rng = np.random.default_rng(2)
        data = rng.random((300, 5))
        model = fit_mnd(data)
        n = 100_000
        draws = model.sample(n, np.random.default_rng(3))  # unclipped
        se = np.sqrt(np.diag(model.cov) / n)
        assert np.all(np.abs(draws.mean(axis=0) - model.mean) < 3.0 * se)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            fit_mnd(np.ones((1, 3)))

    def test_sampling_deterministic_and_clipped(self):
        model = fit_mnd(np.random.default_rng(4).random((50, 3)) * 4.0)
        a = sample(model, 500, seed=9)
        b = sample(model, 500, seed=9)
        assert a.tobytes() == b.tobytes()
        assert a.min() >= 0.0 and a.max() <= 1.0


class TestGMM:
    def test_k1_reduces_to_mnd(self):
        rng = np.random.default_rng(5)
        data = rng.random((200, 4))
        gmm = fit_gmm(data, candidate_k=(1,), seed=0)
        mnd = fit_mnd(data)
        np.testing.assert_allclose(gmm.means[0], mnd.mean, atol=1e-12)
        np.testing.assert_allclose(gmm.covs[0], mnd.cov, atol=1e-9)
        pts = rng.random((100, 4))
        np.testing.assert_allclose(gmm.log_density(pts), mnd.log_density(pts),
                                   atol=1e-6)

    def test_validation_selects_two_components(self):
        train = two_cluster_data(seed=6)
        val = two_cluster_data(seed=7)
        model = fit_gmm(train, candidate_k=(1, 2), validation=val, seed=1)
        assert model.n_components == 2

    def test_train_loglik_nondecreasing(self):
        rng = np.random.default_rng(8)
        for trial in range(5):
            d = int(rng.integers(2, 6))
            data = rng.random((150, d)) + rng.normal(0, 0.2, size=(150, d))
            model = fit_gmm(data, candidate_k=(3,), seed=trial)
            lls = np.array(model.train_log_likelihoods)
            assert len(lls) >= 2
            assert np.all(np.diff(lls) >= -1e-9)

    def test_weights_normalized_and_covs_symmetric(self):
        model = fit_gmm(two_cluster_data(seed=9), candidate_k=(2,), seed=2)
        assert model.weights.min() >= 0.0
        assert abs(model.weights.sum() - 1.0) < 1e-12
        for c in model.covs:
            np.testing.assert_allclose(c, c.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(c) > 0.0)

    def test_selection_needs_validation(self):
        with pytest.raises(ValueError):
            fit_gmm(np.random.default_rng(0).random((50, 2)), candidate_k=(1, 2))

    def test_sampling_respects_mixture(self):
        train = two_cluster_data(n=600, d=2, seed=10)
        model = fit_gmm(train, candidate_k=(2,), seed=3)
        draws = model.sample(20_000, np.random.default_rng(4))
        # roughly half the draws near each well-separated mode
        near_low = (np.abs(draws) < 4.0).all(axis=1).mean()
        assert 0.35 < near_low < 0.65


class TestKDE:
    def test_scott_bandwidth(self):
        rng = np.random.default_rng(11)
        data = rng.random((100, 3))
        model = fit_kde(data)
        expected = data.std(axis=0, ddof=1) * 100 ** (-1.0 / 7.0)
        np.testing.assert_allclose(model.bandwidth, expected)

    def test_zero_bandwidth_resamples_training_points(self):
        data = np.random.default_rng(12).random((20, 2))
        model = fit_kde(data)
        model.bandwidth = np.zeros(2)  # bandwidth -> 0 limit
        draws = model.sample(50, np.random.default_rng(5))
        for row in draws:
            assert any(np.array_equal(row, p) for p in data)

    def test_sampling_is_point_plus_kernel_noise(self):
        data = np.random.default_rng(13).random((10, 2))
        model = fit_kde(data)
        rng_a = np.random.default_rng(6)
        draws = model.sample(100, rng_a)
        # replay the definition with the same generator state
        rng_b = np.random.default_rng(6)
        idx = rng_b.integers(0, 10, size=100)
        noise = rng_b.standard_normal((100, 2)) * model.bandwidth
        np.testing.assert_array_equal(draws, data[idx] + noise)

    def test_sample_mean_within_3_standard_errors(self):
        rng = np.random.default_rng(14)
        data = rng.random((400, 4))
        model = fit_kde(data)
        n = 100_000
        draws = model.sample(n, np.random.default_rng(7))
        # KDE sample variance = data ML variance + bandwidth^2
        var = data.var(axis=0) + model.bandwidth ** 2
        se = np.sqrt(var / n)
        assert np.all(np.abs(draws.mean(axis=0) - data.mean(axis=0)) < 3.0 * se)


class TestSampleDispatch:
    def test_output_width_matches_input(self):
        data = np.random.default_rng(15).random((60, 7))
        for model in (fit_mnd(data), fit_kde(data),
                      fit_gmm(data, candidate_k=(2,), seed=0)):
            out = sample(model, 123, seed=8)
            assert out.shape == (123, 7)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_n_must_be_positive(self):
        model = fit_mnd(np.random.default_rng(16).random((10, 2)))
        with pytest.raises(ValueError):
            sample(model, 0)
