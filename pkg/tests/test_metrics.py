import math

import numpy as np
import pytest

from oracles import brute_medoid, brute_partition_scores
from viscoh import corpus, metrics
from viscoh.metrics import MetricsError


def _clustering(pairs):
    assignment = dict(pairs)
    dense = {}
    original = []
    out = {}
    for image_id, c in assignment.items():
        if c not in dense:
            dense[c] = len(original)
            original.append(str(c))
        out[image_id] = dense[c]
    return corpus.Clustering(assignment=out, num_clusters=len(original),
                             original_ids=tuple(original))


def _embeddings(rows: dict[str, list[float]]):
    ids = tuple(sorted(rows))
    values = np.array([rows[i] for i in ids], dtype=np.float32)
    return corpus.EmbeddingMatrix(ids=ids, values=values)


def _labelmap(labels: dict[str, int], num_labels: int):
    return corpus.LabelMap(labels=labels,
                           names={i: f"l{i}" for i in range(num_labels)})


class TestPurity:
    def test_pure_cluster_scores_one(self):
        clustering = _clustering([("a", 0), ("b", 0), ("c", 0)])
        label_map = _labelmap({"a": 5, "b": 5, "c": 5}, 1000)
        report = metrics.class_purity(clustering, label_map)
        assert report.per_cluster[0].purity == 1.0

    def test_half_split_value(self):
        clustering = _clustering([(f"x{i}", 0) for i in range(4)])
        label_map = _labelmap({"x0": 1, "x1": 1, "x2": 2, "x3": 2}, 1000)
        report = metrics.class_purity(clustering, label_map)
        expected = 1.0 - math.log(2) / math.log(1000)
        assert abs(report.per_cluster[0].purity - expected) < 1e-12

    def test_uniform_labels_score_zero(self):
        members = [(f"x{i}", 0) for i in range(1000)]
        clustering = _clustering(members)
        label_map = _labelmap({f"x{i}": i for i in range(1000)}, 1000)
        report = metrics.class_purity(clustering, label_map)
        assert abs(report.per_cluster[0].purity) < 1e-12

    def test_unlabeled_cluster_flagged_not_scored(self):
        clustering = _clustering([("a", 0), ("b", 1)])
        label_map = _labelmap({"a": 0}, 10)
        report = metrics.class_purity(clustering, label_map)
        assert report.per_cluster[0].purity == 1.0
        assert report.per_cluster[1].purity is None
        assert 1 not in report.scored()

    def test_empty_label_map_rejected(self):
        clustering = _clustering([("a", 0)])
        with pytest.raises(MetricsError, match="empty label map"):
            metrics.class_purity(clustering, corpus.LabelMap(labels={}, names={}))

    def test_relabel_invariance(self):
        clustering = _clustering([(f"x{i}", i % 3) for i in range(12)])
        labels = {f"x{i}": (i * 7) % 4 for i in range(12)}
        base = metrics.class_purity(clustering, _labelmap(labels, 4))
        permuted = {img: (lab + 2) % 4 for img, lab in labels.items()}
        renamed = metrics.class_purity(clustering, _labelmap(permuted, 4))
        for c in base.per_cluster:
            assert base.per_cluster[c].purity == pytest.approx(
                renamed.per_cluster[c].purity, abs=1e-12)


class TestCentroidsAndHardNegatives:
    def test_two_clusters_are_mutual(self):
        clustering = _clustering([("a", 0), ("b", 1)])
        emb = _embeddings({"a": [0.0], "b": [5.0]})
        cmap = metrics.centroids_and_hard_negatives(clustering, emb)
        assert cmap.hard_negative == {0: 1, 1: 0}

    def test_collinear_centroids(self):
        # centroids at 0, 1, 3: 0 -> 1, 1 -> 0, (3) -> 1
        clustering = _clustering([("a", 0), ("b", 1), ("c", 2)])
        emb = _embeddings({"a": [0.0], "b": [1.0], "c": [3.0]})
        cmap = metrics.centroids_and_hard_negatives(clustering, emb)
        assert cmap.hard_negative == {0: 1, 1: 0, 2: 1}

    def test_centroid_is_mean_and_order_free(self):
        emb = _embeddings({"a": [1.0, 0.0], "b": [3.0, 2.0], "c": [0.0, 0.0]})
        first = metrics.centroids_and_hard_negatives(
            _clustering([("a", 0), ("b", 0), ("c", 1)]), emb)
        second = metrics.centroids_and_hard_negatives(
            _clustering([("b", 0), ("a", 0), ("c", 1)]), emb)
        np.testing.assert_allclose(first.centroids, second.centroids)
        np.testing.assert_allclose(first.centroids[0], [2.0, 1.0])

    def test_tie_breaks_to_smaller_cluster_id(self):
        # centroids at -1, 0, 1: cluster 1 is equidistant from 0 and 2
        clustering = _clustering([("a", 0), ("b", 1), ("c", 2)])
        emb = _embeddings({"a": [-1.0], "b": [0.0], "c": [1.0]})
        cmap = metrics.centroids_and_hard_negatives(clustering, emb)
        assert cmap.hard_negative[1] == 0

    def test_missing_embedding_rejected(self):
        clustering = _clustering([("a", 0), ("zz", 1)])
        emb = _embeddings({"a": [0.0]})
        with pytest.raises(corpus.CorpusError, match="zz"):
            metrics.centroids_and_hard_negatives(clustering, emb)

    def test_single_cluster_rejected(self):
        clustering = _clustering([("a", 0), ("b", 0)])
        emb = _embeddings({"a": [0.0], "b": [1.0]})
        with pytest.raises(MetricsError, match="at least 2"):
            metrics.centroids_and_hard_negatives(clustering, emb)


class TestMedoid:
    def test_singleton_returns_its_member(self):
        clustering = _clustering([("only", 0)])
        emb = _embeddings({"only": [1.0, 2.0]})
        assert metrics.representative_image(0, clustering, emb) == "only"

    def test_collinear_medoid(self):
        clustering = _clustering([("a", 0), ("b", 0), ("c", 0)])
        emb = _embeddings({"a": [0.0], "b": [1.0], "c": [10.0]})
        assert metrics.representative_image(0, clustering, emb) == "b"

    def test_matches_brute_force_on_random_clusters(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            ids = [f"p{i}" for i in range(5)]
            vectors = rng.normal(size=(5, 3))
            emb = _embeddings({i: list(map(float, vectors[k]))
                               for k, i in enumerate(ids)})
            clustering = _clustering([(i, 0) for i in ids])
            got = metrics.representative_image(0, clustering, emb)
            # brute oracle works on the same f32-promoted values
            assert got == brute_medoid(sorted(ids), emb.take(sorted(ids)))

    def test_empty_cluster_rejected(self):
        clustering = _clustering([("a", 0)])
        emb = _embeddings({"a": [0.0]})
        with pytest.raises(MetricsError, match="empty or unknown"):
            metrics.representative_image(3, clustering, emb)


class TestCompareClusterings:
    def test_identical_partitions(self):
        a = _clustering([("a", 0), ("b", 0), ("c", 1), ("d", 2)])
        b = _clustering([("a", 5), ("b", 5), ("c", 9), ("d", 7)])
        scores = metrics.compare_clusterings(a, b)
        assert scores == (1.0, 1.0, 1.0)

    def test_degenerate_single_vs_singletons(self):
        ids = [f"x{i}" for i in range(5)]
        one = _clustering([(i, 0) for i in ids])
        singletons = _clustering([(i, k) for k, i in enumerate(ids)])
        scores = metrics.compare_clusterings(one, singletons)
        assert scores.nmi == 0.0
        assert scores.ari == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        ids = [f"x{i}" for i in range(30)]
        a = _clustering([(i, int(rng.integers(0, 4))) for i in ids])
        b = _clustering([(i, int(rng.integers(0, 3))) for i in ids])
        ab = metrics.compare_clusterings(a, b)
        ba = metrics.compare_clusterings(b, a)
        assert ab.nmi == pytest.approx(ba.nmi, abs=1e-12)
        assert ab.ami == pytest.approx(ba.ami, abs=1e-12)
        assert ab.ari == pytest.approx(ba.ari, abs=1e-12)

    def test_matches_brute_force_on_random_pairs(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            la = tuple(int(x) for x in rng.integers(0, 4, n))
            lb = tuple(int(x) for x in rng.integers(0, 4, n))
            ids = [f"e{i}" for i in range(n)]
            a = _clustering(list(zip(ids, la)))
            b = _clustering(list(zip(ids, lb)))
            got = metrics.compare_clusterings(a, b)
            want = brute_partition_scores(la, lb)
            assert got.nmi == pytest.approx(want[0], abs=1e-9)
            assert got.ami == pytest.approx(want[1], abs=1e-9)
            assert got.ari == pytest.approx(want[2], abs=1e-9)

    def test_relabel_invariance(self):
        ids = [f"x{i}" for i in range(10)]
        labels_a = [0, 0, 1, 1, 2, 2, 0, 1, 2, 0]
        labels_b = [1, 1, 0, 0, 1, 0, 1, 0, 0, 1]
        base = metrics.compare_clusterings(
            _clustering(list(zip(ids, labels_a))),
            _clustering(list(zip(ids, labels_b))))
        relabeled = metrics.compare_clusterings(
            _clustering(list(zip(ids, [(l + 1) % 3 for l in labels_a]))),
            _clustering(list(zip(ids, [1 - l for l in labels_b]))))
        assert base == pytest.approx(relabeled, abs=1e-12)

    def test_id_mismatch_rejected(self):
        a = _clustering([("a", 0)])
        b = _clustering([("b", 0)])
        with pytest.raises(MetricsError, match="id sets differ"):
            metrics.compare_clusterings(a, b)

    def test_ari_of_independent_partitions_centers_on_zero(self):
        rng = np.random.default_rng(11)
        ids = [f"x{i}" for i in range(40)]
        values = []
        for _ in range(1000):
            la = [int(x) for x in rng.integers(0, 4, 40)]
            lb = [int(x) for x in rng.integers(0, 4, 40)]
            values.append(metrics.compare_clusterings(
                _clustering(list(zip(ids, la))),
                _clustering(list(zip(ids, lb)))).ari)
        mean = float(np.mean(values))
        stderr = float(np.std(values) / math.sqrt(len(values)))
        assert abs(mean) <= 3 * stderr
