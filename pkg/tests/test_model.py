import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlscore import (
    DomainStats,
    EstimationError,
    ModelError,
    StatsOptions,
    build_enrollment_model,
    enrollment_models_from_dataset,
    estimate_domain_stats,
    marginal_log_density,
    nl_log_score,
    predictive_log_density,
)
from conftest import dataset_from_arrays, sample_two_level
from oracles import (
    quadrature_log_marginal_1d,
    sequential_predictive_log_density,
    two_cov_plda_llr,
)


class TestEstimateDomainStats:
    def test_zero_within_class_scatter_hits_floor(self):
        # 2 speakers, each repeating one vector: within-speaker variance 0
        data = dataset_from_arrays(
            {"a": np.tile([0.0, 0.0], (5, 1)), "b": np.tile([2.0, 0.0], (5, 1))}
        )
        stats = estimate_domain_stats(data)
        assert stats.within_var == 1e-6
        # speaker means centered: (-1, 0) and (1, 0); population variance
        # averaged over the two dims is 0.5, minus a negligible correction
        assert stats.between_var == pytest.approx(0.5, abs=1e-5)
        np.testing.assert_allclose(stats.center, [1.0, 0.0])

    def test_monte_carlo_recovery(self):
        rng = np.random.default_rng(123)
        x = sample_two_level(rng, n_speakers=500, n_utts=20, dim=8, between=1.0, within=0.5)
        data = dataset_from_arrays({f"s{k:03d}": x[k] for k in range(500)})
        stats = estimate_domain_stats(data)
        assert abs(stats.between_var - 1.0) < 0.10
        assert abs(stats.within_var - 0.5) < 0.025

    def test_single_speaker_rejected(self):
        data = dataset_from_arrays({"only": np.random.default_rng(0).standard_normal((4, 3))})
        with pytest.raises(EstimationError):
            estimate_domain_stats(data)

    def test_no_repeated_speaker_rejected(self):
        data = dataset_from_arrays(
            {"a": np.array([[0.0, 1.0]]), "b": np.array([[1.0, 0.0]])}
        )
        with pytest.raises(EstimationError, match="unidentifiable"):
            estimate_domain_stats(data)

    def test_length_normalize_preprocessing(self):
        rng = np.random.default_rng(5)
        raw = {f"s{k}": 3.0 * rng.standard_normal((6, 4)) for k in range(8)}
        data = dataset_from_arrays(raw)
        normed = estimate_domain_stats(data, StatsOptions(length_normalize=True))
        plain = estimate_domain_stats(data)
        assert normed != plain
        assert np.linalg.norm(normed.center) <= 1.0 + 1e-12

    def test_unbalanced_counts(self):
        rng = np.random.default_rng(7)
        data = dataset_from_arrays(
            {"a": rng.standard_normal((1, 3)), "b": rng.standard_normal((9, 3)),
             "c": rng.standard_normal((4, 3))}
        )
        stats = estimate_domain_stats(data)
        assert stats.between_var > 0 and stats.within_var > 0


class TestBuildEnrollmentModel:
    def test_single_sample(self):
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.zeros(2))
        model = build_enrollment_model(stats, "m", [np.array([2.0, 0.0])])
        np.testing.assert_allclose(model.pred_mean, [1.0, 0.0])
        assert model.pred_var == pytest.approx(1.5)
        assert model.n_samples == 1

    def test_large_n_limit(self):
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.zeros(2))
        samples = np.tile([2.0, 0.0], (10000, 1))
        model = build_enrollment_model(stats, "m", samples)
        np.testing.assert_allclose(model.pred_mean, [2.0, 0.0], atol=1e-3)
        assert abs(model.pred_var - 1.0) < 1e-3

    def test_hand_derived_values(self):
        # four samples, between 2, within 0.5: shrink 8/8.5, var 0.5 + 1/8.5
        stats = DomainStats(dim=4, between_var=2.0, within_var=0.5, center=np.zeros(4))
        c = 0.7
        samples = np.tile(c * np.ones(4), (4, 1))
        model = build_enrollment_model(stats, "m", samples)
        np.testing.assert_allclose(model.pred_mean, (8.0 / 8.5) * c * np.ones(4), rtol=1e-15)
        assert model.pred_var == pytest.approx(0.5 + 1.0 / 8.5, rel=1e-15)

    def test_centering_applied(self):
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.array([5.0, -1.0]))
        model = build_enrollment_model(stats, "m", [np.array([7.0, -1.0])])
        np.testing.assert_allclose(model.sample_mean, [2.0, 0.0])

    def test_errors(self):
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.zeros(2))
        with pytest.raises(ModelError):
            build_enrollment_model(stats, "m", np.zeros((0, 2)))
        with pytest.raises(ModelError):
            build_enrollment_model(stats, "m", [np.array([1.0, 2.0, 3.0])])

    @settings(max_examples=60, deadline=None)
    @given(
        between=st.floats(1e-3, 1e3),
        within=st.floats(1e-3, 1e3),
        n=st.integers(1, 50),
        dim=st.integers(1, 6),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_invariants_hold(self, between, within, n, dim, seed):
        rng = np.random.default_rng(seed)
        stats = DomainStats(
            dim=dim, between_var=between, within_var=within, center=rng.standard_normal(dim)
        )
        samples = rng.standard_normal((n, dim)) * 3.0
        model = build_enrollment_model(stats, "m", samples)
        shrink = n * between / (n * between + within)
        np.testing.assert_allclose(model.pred_mean, shrink * model.sample_mean, rtol=1e-12)
        expected_var = within + between * within / (n * between + within)
        assert model.pred_var == pytest.approx(expected_var, rel=1e-12)
        assert within < model.pred_var <= within + between * within / (between + within) + 1e-15


class TestMarginalLogDensity:
    def test_standard_gaussian_at_mean(self):
        stats = DomainStats(dim=1, between_var=1.0, within_var=1.0, center=np.zeros(1))
        assert marginal_log_density(stats, np.array([0.0])) == pytest.approx(
            -0.5 * math.log(4 * math.pi)
        )

    def test_quadratic_term(self):
        stats = DomainStats(dim=1, between_var=1.0, within_var=1.0, center=np.zeros(1))
        assert marginal_log_density(stats, np.array([2.0])) == pytest.approx(
            -0.5 * math.log(4 * math.pi) - 1.0
        )

    def test_matches_quadrature(self):
        rng = np.random.default_rng(42)
        stats = DomainStats(
            dim=5, between_var=1.7, within_var=0.6, center=rng.standard_normal(5)
        )
        x = rng.standard_normal(5) * 2.0
        expected = sum(
            quadrature_log_marginal_1d(float(xc), 1.7, 0.6) for xc in x - stats.center
        )
        assert marginal_log_density(stats, x) == pytest.approx(expected, abs=1e-3)

    def test_dimension_mismatch(self):
        stats = DomainStats(dim=3, between_var=1.0, within_var=1.0, center=np.zeros(3))
        with pytest.raises(ModelError):
            marginal_log_density(stats, np.zeros(4))

    def test_integrates_to_one_monte_carlo(self):
        stats = DomainStats(dim=1, between_var=0.8, within_var=0.4, center=np.array([0.3]))
        rng = np.random.default_rng(99)
        lo, hi = -12.0, 12.0
        x = rng.uniform(lo, hi, size=400000)[:, None]
        mass = (hi - lo) * np.exp(marginal_log_density(stats, x)).mean()
        assert abs(mass - 1.0) < 1e-2

    def test_batch_matches_loop(self):
        rng = np.random.default_rng(3)
        stats = DomainStats(dim=4, between_var=2.0, within_var=0.3, center=rng.standard_normal(4))
        batch = rng.standard_normal((7, 4))
        out = marginal_log_density(stats, batch)
        for i in range(7):
            assert out[i] == pytest.approx(marginal_log_density(stats, batch[i]), rel=1e-15)


class TestPredictiveLogDensity:
    def test_density_at_mean(self):
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.zeros(2))
        model = build_enrollment_model(stats, "m", [np.array([2.0, 0.0])])
        at_mode = predictive_log_density(model, model.pred_mean, stats)
        assert at_mode == pytest.approx(-math.log(2 * math.pi * model.pred_var))

    def test_known_point(self):
        # one sample (2, 0): predictive mean (1, 0), so x = (1, 0) sits at the mode
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.zeros(2))
        model = build_enrollment_model(stats, "m", [np.array([2.0, 0.0])])
        got = predictive_log_density(model, np.array([1.0, 0.0]), stats)
        assert got == pytest.approx(-math.log(2 * math.pi * 1.5))

    def test_matches_sequential_bayes_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            dim = int(rng.integers(1, 6))
            between = float(rng.uniform(0.2, 3.0))
            within = float(rng.uniform(0.2, 3.0))
            center = rng.standard_normal(dim)
            stats = DomainStats(dim=dim, between_var=between, within_var=within, center=center)
            samples = rng.standard_normal((int(rng.integers(1, 9)), dim)) * 2.0
            x = rng.standard_normal(dim) * 2.0
            model = build_enrollment_model(stats, "m", samples)
            expected = sequential_predictive_log_density(samples, x, between, within, center)
            assert predictive_log_density(model, x, stats) == pytest.approx(expected, abs=1e-10)

    def test_large_n_converges_to_within_noise_model(self):
        rng = np.random.default_rng(21)
        dim = 3
        stats = DomainStats(dim=dim, between_var=1.0, within_var=0.5, center=np.zeros(dim))
        point = rng.standard_normal(dim)
        samples = np.tile(point, (10**6, 1))
        model = build_enrollment_model(stats, "m", samples)
        x = rng.standard_normal(dim)
        limit = (
            -0.5 * dim * math.log(2 * math.pi * 0.5)
            - float(((x - point) ** 2).sum()) / (2 * 0.5)
        )
        assert abs(predictive_log_density(model, x, stats) - limit) < 1e-4


class TestNlLogScore:
    def test_hand_evaluated(self):
        stats = DomainStats(dim=2, between_var=1.0, within_var=1.0, center=np.zeros(2))
        model = build_enrollment_model(stats, "m", [np.array([2.0, 0.0])])
        x = np.array([2.0, 0.0])
        predictive = -math.log(2 * math.pi * 1.5) - 1.0 / 3.0  # |x - (1,0)|^2 / (2 * 1.5)
        marginal = -math.log(4 * math.pi) - 1.0  # |x|^2 / (2 * 2)
        assert nl_log_score(model, x, stats) == pytest.approx(predictive - marginal, rel=1e-12)

    def test_vanishing_between_variance_kills_scores(self):
        # with between-speaker variance at the floor the predictive and
        # marginal distributions coincide up to analytically bounded terms
        dim, n = 3, 5
        between, within = 1e-6, 1.0
        rng = np.random.default_rng(17)
        stats = DomainStats(dim=dim, between_var=between, within_var=within, center=np.zeros(dim))
        samples = rng.standard_normal((n, dim))
        model = build_enrollment_model(stats, "m", samples)
        x = rng.standard_normal(dim)
        score = nl_log_score(model, x, stats)

        xc_norm = float(np.linalg.norm(x))
        mu_norm = float(np.linalg.norm(model.pred_mean))
        pv = model.pred_var
        u = n * between**2 / ((n * between + within) * (between + within))
        bound = (
            0.5 * dim * u / (1.0 - u)
            + (2 * xc_norm * mu_norm + mu_norm**2) / (2 * pv)
            + xc_norm**2 * n * between**2 / (2 * (n * between + within) * pv * (between + within))
        )
        assert abs(score) <= bound
        assert bound < 1e-3

    def test_score_differences_match_two_cov_plda(self):
        rng = np.random.default_rng(31)
        dim = 4
        between, within = 1.4, 0.6
        center = rng.standard_normal(dim)
        stats = DomainStats(dim=dim, between_var=between, within_var=within, center=center)
        scores, llrs = [], []
        for _ in range(200):
            n = int(rng.integers(1, 8))
            enroll = rng.standard_normal((n, dim)) + center
            x = rng.standard_normal(dim) + center
            model = build_enrollment_model(stats, "m", enroll)
            scores.append(nl_log_score(model, x, stats))
            llrs.append(two_cov_plda_llr(enroll, x, between, within, center))
        scores = np.asarray(scores)
        llrs = np.asarray(llrs)
        diff = (scores - scores.mean()) - (llrs - llrs.mean())
        assert np.abs(diff).max() < 1e-8

    def test_centering_consistency(self):
        rng = np.random.default_rng(55)
        dim = 4
        shift = rng.standard_normal(dim) * 10.0
        center = rng.standard_normal(dim)
        samples = rng.standard_normal((6, dim))
        x = rng.standard_normal(dim)
        stats = DomainStats(dim=dim, between_var=1.2, within_var=0.7, center=center)
        stats_shifted = DomainStats(dim=dim, between_var=1.2, within_var=0.7, center=center + shift)
        score = nl_log_score(build_enrollment_model(stats, "m", samples), x, stats)
        score_shifted = nl_log_score(
            build_enrollment_model(stats_shifted, "m", samples + shift), x + shift, stats_shifted
        )
        assert score_shifted == pytest.approx(score, abs=1e-10)


def test_enrollment_models_from_dataset_covers_all_speakers():
    rng = np.random.default_rng(2)
    data = dataset_from_arrays({f"s{k}": rng.standard_normal((3, 4)) for k in range(5)})
    stats = estimate_domain_stats(data)
    models = enrollment_models_from_dataset(stats, data)
    assert sorted(models) == data.speakers()
    for spk, model in models.items():
        assert model.n_samples == 3
        assert model.model_id == spk
