import numpy as np
import pytest
from oracles import dbscan_reference

from modbridge import metrics
from modbridge.clustering import DistanceMatrix, dbscan, pairwise_distances
from modbridge.core import OUTLIER, FeatureMatrix, l2_normalize


def _euclid(points):
    return pairwise_distances(FeatureMatrix(np.asarray(points, dtype=float)),
                              "euclidean")


def test_identical_rows_zero_distance():
    d = _euclid([[1.0, 2.0], [1.0, 2.0]])
    assert d.values[0, 1] == 0.0


def test_orthogonal_unit_vectors():
    m = l2_normalize(FeatureMatrix(np.eye(2)))
    assert np.isclose(pairwise_distances(m, "euclidean").values[0, 1], np.sqrt(2))
    assert np.isclose(pairwise_distances(m, "cosine_distance").values[0, 1], 1.0)


def test_cosine_requires_normalized():
    m = FeatureMatrix(np.array([[3.0, 4.0], [1.0, 0.0]]))
    with pytest.raises(ValueError, match="normaliz"):
        pairwise_distances(m, "cosine_distance")


def test_distance_matrix_properties():
    rng = np.random.default_rng(2)
    m = l2_normalize(FeatureMatrix(rng.normal(size=(40, 6))))
    for metric in ("euclidean", "cosine_distance"):
        d = pairwise_distances(m, metric)
        assert np.array_equal(d.values, d.values.T)
        assert np.all(np.diag(d.values) == 0.0)
        assert np.all(d.values >= 0.0)


def test_workers_do_not_change_result():
    rng = np.random.default_rng(4)
    m = l2_normalize(FeatureMatrix(rng.normal(size=(50, 8))))
    single = pairwise_distances(m, "euclidean", n_workers=1)
    multi = pairwise_distances(m, "euclidean", n_workers=4)
    # chunked BLAS may differ by rounding, never more
    assert np.max(np.abs(single.values - multi.values)) < 1e-12
    again = pairwise_distances(m, "euclidean", n_workers=4)
    assert np.array_equal(multi.values, again.values)


def test_dbscan_two_tight_groups():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0.0, 0.01, size=(5, 2)),
                     rng.normal(10.0, 0.01, size=(5, 2))])
    d = _euclid(pts)
    labeling = dbscan(d, eps=0.5, min_pts=3)
    assert labeling.y_count == 2
    assert not np.any(labeling.labels == OUTLIER)
    ref_labels, ref_y = dbscan_reference(d.values, 0.5, 3)
    assert labeling.labels.tolist() == ref_labels
    assert labeling.y_count == ref_y


def test_dbscan_isolated_point_is_outlier():
    d = _euclid([[0.0, 0.0]])
    labeling = dbscan(d, eps=0.1, min_pts=2)
    assert labeling.labels.tolist() == [OUTLIER]
    assert labeling.y_count == 0


def test_dbscan_all_identical_points():
    d = _euclid([[1.0, 1.0]] * 6)
    labeling = dbscan(d, eps=0.1, min_pts=6)
    assert labeling.y_count == 1
    assert np.all(labeling.labels == 0)


def test_dbscan_matches_reference_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(10, 120))
        centers = rng.normal(scale=4.0, size=(int(rng.integers(2, 6)), 2))
        pts = centers[rng.integers(0, centers.shape[0], size=n)] \
            + rng.normal(scale=0.4, size=(n, 2))
        d = _euclid(pts)
        eps = float(rng.uniform(0.3, 1.2))
        min_pts = int(rng.integers(2, 6))
        ours = dbscan(d, eps, min_pts)
        ref_labels, ref_y = dbscan_reference(d.values, eps, min_pts)
        assert ours.labels.tolist() == ref_labels
        assert ours.y_count == ref_y


def test_dbscan_permutation_equivariance():
    rng = np.random.default_rng(23)
    pts = np.vstack([rng.normal(i * 5.0, 0.2, size=(20, 3)) for i in range(3)])
    base = dbscan(_euclid(pts), eps=1.0, min_pts=4)
    perm = rng.permutation(pts.shape[0])
    shuffled = dbscan(_euclid(pts[perm]), eps=1.0, min_pts=4)
    # identical clustering up to relabeling
    assert metrics.ari(shuffled.labels, base.labels[perm]) == 1.0


def test_distance_matrix_rejects_asymmetry():
    with pytest.raises(ValueError):
        DistanceMatrix(values=np.array([[0.0, 1.0], [2.0, 0.0]]),
                       metric="euclidean")
