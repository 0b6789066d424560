"""ROC / FPR95, descriptor matching, rigid alignment and timing tables."""

import numpy as np
import pandas as pd
import pytest

from Classes.Base.CustomExceptionClass import (
    DegenerateGeometry, DegenerateLabels, EmptyInput, InsufficientCorrespondences, InvalidConfig, NoConsensus,
)
from Classes.Cloud.PointCloudClass import PointCloud
from Classes.Cloud.RigidTransformClass import RigidTransform
from Classes.Descriptor.ModelClass import build_model, describe
from Classes.Evaluation.AlignmentClass import (
    Correspondence, alignment_error, kabsch, match_keypoints, ransac_align, summarize_alignment,
)
from Classes.Evaluation.BenchClass import bench_timing
from Classes.Evaluation.RocClass import fpr95, roc_curve, roc_frame, summary_line


def _random_transform(rng, scale=2.0):
    return RigidTransform.from_axis_angle(rng.normal(size=3), rng.uniform(0.05, 3.0), rng.normal(scale=scale, size=3))


class TestRoc:

    def test_perfect_separation(self):
        curve = roc_curve([0.9, 0.8, 0.7, 0.2, 0.1], [1, 1, 1, 0, 0])
        assert curve.auc == 1.0
        assert fpr95(curve) == 0.0

    def test_constant_scores(self):
        curve = roc_curve(np.full(10, 0.5), [1, 0] * 5)
        assert curve.points()[0][1:] == (0.0, 0.0)
        assert curve.points()[1][1:] == (1.0, 1.0)
        assert len(curve.thresholds) == 2
        assert curve.auc == 0.5
        assert fpr95(curve) == pytest.approx(0.95, abs=1e-12)

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(2, size=200)
        scores = np.round(rng.random(200) + 0.3 * labels, 2)
        curve = roc_curve(scores, labels)
        for t, tpr, fpr in curve.points()[1:]:
            assert tpr == np.mean(scores[labels == 1] >= t)
            assert fpr == np.mean(scores[labels == 0] >= t)
        assert curve.thresholds[0] == np.inf
        assert np.all(np.diff(curve.thresholds[1:]) < 0)

    def test_fpr95_matches_threshold_search(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(2, size=300)
        scores = rng.random(300) + 0.5 * labels
        points = [(0.0, 0.0)]
        for t in sorted(set(scores), reverse=True):
            points.append((np.mean(scores[labels == 1] >= t), np.mean(scores[labels == 0] >= t)))
        k = next(i for i, (tpr, _) in enumerate(points) if tpr >= 0.95)
        (t0, f0), (t1, f1) = points[k - 1], points[k]
        expected = f0 + (0.95 - t0) * (f1 - f0) / (t1 - t0)
        assert fpr95(roc_curve(scores, labels)) == pytest.approx(expected, abs=1e-9)

    def test_single_class(self):
        with pytest.raises(DegenerateLabels):
            roc_curve([0.1, 0.2], [1, 1])

    def test_outputs(self):
        curve = roc_curve([0.9, 0.1], [1, 0])
        assert list(roc_frame(curve).columns) == ['threshold', 'tpr', 'fpr']
        assert summary_line(curve) == "fpr95=0.000000,auc=1.000000"


class TestMatchKeypoints:

    def test_identical_sets_match_themselves(self):
        model = build_model(seed=0)
        patches = np.random.default_rng(2).random((5, 64, 64, 2))
        desc = describe(model, patches)
        matches = match_keypoints(desc, desc.copy(), 'euclidean')
        assert [(c.source, c.target) for c in matches] == [(i, i) for i in range(5)]
        assert all(c.score == 0.0 for c in matches)

    def test_mutual_best_filter(self):
        desc_a = np.array([[0.0], [0.9]])
        desc_b = np.array([[1.0], [5.0]])
        matches = match_keypoints(desc_a, desc_b, 'euclidean')
        assert [(c.source, c.target) for c in matches] == [(1, 0)]

    def test_euclidean_threshold(self):
        desc = np.eye(3)
        assert match_keypoints(desc, desc + 0.5, 'euclidean', accept_threshold=0.1) == []

    def test_metric_matcher_scores_are_probabilities(self):
        model = build_model(seed=1)
        desc = describe(model, np.random.default_rng(3).random((4, 64, 64, 2)))
        for c in match_keypoints(desc, desc, 'metric', accept_threshold=0.0, params=model, workers=2):
            assert 0.0 <= c.score <= 1.0

    def test_empty(self):
        with pytest.raises(EmptyInput):
            match_keypoints(np.zeros((0, 4)), np.zeros((3, 4)))

    def test_unknown_matcher(self):
        with pytest.raises(InvalidConfig):
            match_keypoints(np.eye(2), np.eye(2), 'cosine')


class TestKabsch:

    def test_self_correspondences(self):
        points = np.random.default_rng(4).normal(size=(10, 3))
        T = kabsch(points, points)
        np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(T.translation, np.zeros(3), atol=1e-12)

    def test_two_correspondences(self):
        with pytest.raises(InsufficientCorrespondences):
            kabsch(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_collinear(self):
        line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateGeometry):
            kabsch(line, line + 1.0)

    def test_recovers_random_transform(self):
        rng = np.random.default_rng(5)
        truth = _random_transform(rng)
        source = rng.uniform(-5, 5, size=(50, 3))
        error = alignment_error(kabsch(source, truth.apply(source)), truth)
        assert error.t_e < 1e-9 and error.r_e < 1e-9

    def test_indexed_by_correspondences(self):
        rng = np.random.default_rng(6)
        truth = _random_transform(rng)
        source = rng.normal(size=(8, 3))
        target = truth.apply(source)[::-1]
        pairs = [Correspondence(i, 7 - i, 1.0) for i in range(8)]
        error = alignment_error(kabsch(source, target, pairs), truth)
        assert error.t_e < 1e-9 and error.r_e < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_fit_is_no_worse_than_identity(self, seed):
        rng = np.random.default_rng(40 + seed)
        source = rng.normal(size=(30, 3))
        target = _random_transform(rng).apply(source) + rng.normal(scale=0.05, size=(30, 3))
        fitted = np.sum((kabsch(source, target).apply(source) - target) ** 2)
        assert fitted <= np.sum((source - target) ** 2)


def _contaminated(seed, count=50, inlier_share=0.6):
    rng = np.random.default_rng(seed)
    truth = _random_transform(rng)
    source = rng.uniform(-10, 10, size=(count, 3))
    target = truth.apply(source)
    outliers = rng.permutation(count)[:int(round(count * (1 - inlier_share)))]
    target[outliers] = rng.uniform(-10, 10, size=(len(outliers), 3))
    return source, target, truth, outliers


class TestRansac:

    def test_clean_input_equals_kabsch(self):
        rng = np.random.default_rng(7)
        truth = _random_transform(rng)
        source = rng.normal(size=(30, 3))
        target = truth.apply(source)
        estimate, inliers = ransac_align(source, target, iterations=50)
        plain = kabsch(source, target)
        np.testing.assert_allclose(estimate.as_matrix(), plain.as_matrix(), atol=1e-9)
        assert len(inliers) == 30

    def test_two_correspondences(self):
        with pytest.raises(InsufficientCorrespondences):
            ransac_align(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_outliers_are_rejected(self):
        source, target, truth, outliers = _contaminated(8)
        estimate, inliers = ransac_align(source, target, seed=8)
        assert alignment_error(estimate, truth).t_e < 0.05
        assert not set(inliers.tolist()) & set(outliers.tolist())

    def test_same_seed_same_answer(self):
        source, target, _, _ = _contaminated(9)
        first, _ = ransac_align(source, target, iterations=100, seed=3)
        second, _ = ransac_align(source, target, iterations=100, seed=3)
        np.testing.assert_array_equal(first.as_matrix(), second.as_matrix())

    def test_no_consensus(self):
        rng = np.random.default_rng(10)
        with pytest.raises(NoConsensus):
            ransac_align(rng.uniform(-50, 50, (6, 3)), rng.uniform(-50, 50, (6, 3)), iterations=20,
                         inlier_threshold=1e-6)

    @pytest.mark.slow
    def test_monte_carlo_recovery(self):
        recovered = 0
        for seed in range(100):
            source, target, truth, _ = _contaminated(seed)
            estimate, _ = ransac_align(source, target, seed=seed)
            recovered += alignment_error(estimate, truth).t_e < 0.05
        assert recovered >= 95


class TestAlignmentError:

    def test_exact_estimate(self):
        T = _random_transform(np.random.default_rng(11))
        assert alignment_error(T, T) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_extra_rotation(self):
        truth = _random_transform(np.random.default_rng(12))
        estimate = truth.compose(RigidTransform.from_axis_angle((0, 0, 1), 0.04))
        error = alignment_error(estimate, truth)
        assert error.r_e == pytest.approx(0.04, abs=1e-9)
        assert error.t_e == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_common_motion_cancels(self, seed):
        rng = np.random.default_rng(20 + seed)
        estimate, truth, motion = (_random_transform(rng) for _ in range(3))
        moved = alignment_error(motion.compose(estimate), motion.compose(truth))
        expected = alignment_error(estimate, truth)
        assert moved.t_e == pytest.approx(expected.t_e, abs=1e-9)
        assert moved.r_e == pytest.approx(expected.r_e, abs=1e-9)

    def test_summary_per_filter(self):
        rows = pd.DataFrame({
            'filter': ['raw', 'ransac', 'raw', 'ransac'],
            't_e': [0.2, 0.1, 0.4, 0.1],
            'r_e': [0.02, 0.01, 0.04, 0.03],
            'match_seconds': [1.0, 1.0, 3.0, 3.0],
        })
        summary = summarize_alignment(rows).set_index('filter')
        assert summary.loc['raw', 't_e_mean'] == pytest.approx(0.3)
        assert summary.loc['raw', 't_e_std'] == pytest.approx(0.1)
        assert summary.loc['ransac', 'r_e_mean'] == pytest.approx(0.02)
        assert summary.loc['ransac', 'objects'] == 2


class TestBench:

    @pytest.fixture(scope="class")
    def cloud(self):
        rng = np.random.default_rng(13)
        return PointCloud(rng.uniform(4, 8, size=(800, 3)), rng.random(800))

    def test_table_layout(self, cloud):
        neighborhood, sampling = bench_timing(cloud, build_model(seed=0), (0.4, 0.8), (3.2, 1.6), repeat=1,
                                              sampling_radius=3.2)
        assert list(neighborhood.columns) == ['neighborhood_radius', 'keypoints', 'patch_ms', 'descriptor_ms']
        assert list(sampling.columns) == ['sampling_radius', 'keypoints', 'sampling_ms', 'patch_ms_total',
                                          'descriptor_ms_total', 'total_ms']
        assert neighborhood['neighborhood_radius'].tolist() == [0.4, 0.8]
        assert sampling['keypoints'].is_monotonic_increasing
        assert (sampling['total_ms'] >= sampling['sampling_ms']).all()

    def test_unordered_radii(self, cloud):
        with pytest.raises(InvalidConfig):
            bench_timing(cloud, build_model(seed=0), (0.4, 1.6, 0.8), (1.6,), repeat=1)

    def test_empty_cloud(self):
        with pytest.raises(EmptyInput):
            bench_timing(PointCloud(), build_model(seed=0))
