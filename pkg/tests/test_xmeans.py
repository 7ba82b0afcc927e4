"""Reference-group clustering: Lloyd invariants, BIC model selection."""
import numpy as np
import pytest

from ctxens.xmeans import bic_score, kmeans, xmeans


def blobs(rng, centers, n_per, scale=0.3):
    parts, labels = [], []
    for i, c in enumerate(centers):
        parts.append(rng.normal(loc=c, scale=scale, size=(n_per, len(c))))
        labels.extend([i] * n_per)
    return np.vstack(parts), np.asarray(labels)


class TestKmeans:
    def test_every_point_with_nearest_center(self, rng):
        X = rng.normal(size=(150, 3))
        centers, labels, _ = kmeans(X, 4, rng)
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assert np.array_equal(labels, d2.argmin(axis=1))

    def test_inertia_matches_labeling(self, rng):
        X = rng.normal(size=(80, 2))
        centers, labels, inertia = kmeans(X, 3, rng)
        assert inertia == pytest.approx(float(((X - centers[labels]) ** 2).sum()))

    def test_recovers_well_separated_blobs(self, rng):
        X, truth = blobs(rng, [(0, 0), (10, 0), (0, 10)], 50)
        _, labels, _ = kmeans(X, 3, rng)
        # same partition as the truth, up to cluster renaming
        mapping = {}
        for t, l in zip(truth, labels):
            mapping.setdefault(t, l)
            assert mapping[t] == l
        assert len(set(mapping.values())) == 3

    def test_deterministic_given_seed(self):
        X = np.random.default_rng(2).normal(size=(60, 2))
        c1, l1, _ = kmeans(X, 3, np.random.default_rng(7))
        c2, l2, _ = kmeans(X, 3, np.random.default_rng(7))
        assert np.array_equal(c1, c2) and np.array_equal(l1, l2)


class TestBic:
    def test_prefers_true_cluster_count_on_grid(self, rng):
        # oracle: evaluate BIC for k = 1..6 via plain k-means and check the
        # argmax lands on the generating k
        X, _ = blobs(rng, [(0, 0), (8, 8), (0, 8)], 60, scale=0.4)
        scores = []
        for k in range(1, 7):
            centers, labels, _ = kmeans(X, k, rng)
            scores.append(bic_score(X, centers, labels))
        assert int(np.argmax(scores)) + 1 == 3

    def test_split_of_single_blob_scores_worse(self, rng):
        X = rng.normal(size=(200, 2))
        one = bic_score(X, X.mean(axis=0)[None, :], np.zeros(200, dtype=np.int64))
        centers, labels, _ = kmeans(X, 2, rng)
        two = bic_score(X, centers, labels)
        assert one > two

    def test_degenerate_inputs(self):
        X = np.zeros((3, 2))
        c = np.zeros((3, 2))
        assert bic_score(X, c, np.arange(3)) == -np.inf


class TestXmeans:
    def test_finds_three_groups(self, rng):
        X, truth = blobs(rng, [(0, 0), (12, 0), (0, 12)], 70, scale=0.5)
        centers, labels = xmeans(X, max_clusters=10, rng=rng)
        assert centers.shape[0] == 3
        # each found cluster is pure
        for g in range(3):
            assert len(set(labels[truth == g])) == 1

    def test_single_blob_stays_whole(self, rng):
        X = rng.normal(size=(150, 3))
        centers, labels = xmeans(X, max_clusters=8, rng=rng)
        assert centers.shape[0] <= 2  # BIC may split noise once, never shatter
        assert labels.max() == centers.shape[0] - 1

    def test_respects_max_clusters(self, rng):
        X, _ = blobs(rng, [(i * 10, 0) for i in range(6)], 30)
        centers, labels = xmeans(X, max_clusters=4, rng=rng)
        assert 1 <= centers.shape[0] <= 4

    def test_labels_are_nearest_center_and_compact(self, rng):
        X, _ = blobs(rng, [(0, 0), (9, 9)], 40)
        centers, labels = xmeans(X, max_clusters=5, rng=rng)
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assert np.array_equal(labels, d2.argmin(axis=1))
        assert set(labels.tolist()) == set(range(centers.shape[0]))

    def test_deterministic_given_seed(self):
        X = np.random.default_rng(4).normal(size=(120, 2)) * 3
        c1, l1 = xmeans(X, 6, np.random.default_rng(11))
        c2, l2 = xmeans(X, 6, np.random.default_rng(11))
        assert np.array_equal(c1, c2) and np.array_equal(l1, l2)

    def test_empty_input_rejected(self, rng):
        with pytest.raises(ValueError):
            xmeans(np.empty((0, 2)), 3, rng)
