import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whymine.corpus import ActionEntry, ReasonEntry, ReasonTaxonomy
from whymine.taxonomy import (
    TaxonomyError,
    admit_crowd_reasons,
    cut_tree,
    filter_funnel,
    propose_representatives,
    ward_cluster,
    ward_tree,
)


def greedy_ward_oracle(vectors):
    """Independent brute-force greedy Ward: recompute the variance
    increase from centroids directly at every step."""
    clusters = {(rid,): (np.asarray(vectors[rid], dtype=float), 1) for rid in vectors}
    merges = []
    while len(clusters) > 1:
        best = None
        keys = sorted(clusters)
        for i, ka in enumerate(keys):
            for kb in keys[i + 1:]:
                ca, na = clusters[ka]
                cb, nb = clusters[kb]
                diff = ca - cb
                delta = na * nb / (na + nb) * float(diff @ diff)
                cand = (delta, tuple(sorted((ka, kb))))
                if best is None or cand < best:
                    best = cand
        delta, (ka, kb) = best
        ca, na = clusters.pop(ka)
        cb, nb = clusters.pop(kb)
        merged = tuple(sorted(ka + kb))
        clusters[merged] = ((na * ca + nb * cb) / (na + nb), na + nb)
        merges.append((ka, kb, delta))
    return merges


def _vecs(points):
    return {f"r{i:02d}": np.atleast_1d(np.asarray(p, dtype=float))
            for i, p in enumerate(points)}


class TestWardCluster:
    def test_single_vector(self):
        assert ward_cluster(_vecs([[1.0, 2.0]]), cut=0.0) == [("r00",)]

    def test_one_dimensional_example(self):
        vectors = _vecs([0.0, 0.1, 10.0])
        tree = ward_tree(vectors)
        d1, d2 = tree.merges[0].distance, tree.merges[1].distance
        cut = (d1 + d2) / 2
        assert ward_cluster(vectors, cut) == [("r00", "r01"), ("r02",)]
        # oracle: the greedy sequence agrees
        oracle = greedy_ward_oracle(vectors)
        assert [(m.a, m.b) for m in tree.merges] == [(a, b) for a, b, _ in oracle]

    def test_identical_vectors_merge_first(self):
        vectors = _vecs([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
        tree = ward_tree(vectors)
        assert set(tree.merges[0].a + tree.merges[0].b) == {"r00", "r02"}
        assert tree.merges[0].distance == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(TaxonomyError):
            ward_tree({"a": np.zeros(2), "b": np.zeros(3)})

    def test_matches_brute_force_oracle_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            dim = int(rng.integers(1, 4))
            vectors = _vecs(rng.normal(size=(n, dim)))
            tree = ward_tree(vectors)
            oracle = greedy_ward_oracle(vectors)
            assert [(m.a, m.b) for m in tree.merges] == [(a, b) for a, b, _ in oracle]
            for merge, (_, _, delta) in zip(tree.merges, oracle):
                assert merge.distance == pytest.approx(delta, abs=1e-9)

    def test_merge_distances_non_decreasing(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            vectors = _vecs(rng.normal(size=(n, 2)))
            distances = [m.distance for m in ward_tree(vectors).merges]
            assert all(a <= b + 1e-12 for a, b in zip(distances, distances[1:]))

    def test_smaller_cut_refines_larger(self):
        rng = np.random.default_rng(3)
        vectors = _vecs(rng.normal(size=(8, 2)))
        tree = ward_tree(vectors)
        small = cut_tree(tree, 0.3)
        large = cut_tree(tree, 2.0)
        for cluster in small:
            assert any(set(cluster) <= set(big) for big in large)


class TestRepresentatives:
    def test_singleton(self):
        vectors = {"a": np.array([1.0, 0.0])}
        assert propose_representatives([("a",)], vectors) == {("a",): "a"}

    def test_pair_tie_breaks_lexicographically(self):
        vectors = {"b": np.array([1.0, 0.0]), "a": np.array([0.0, 1.0])}
        assert propose_representatives([("a", "b")], vectors)[("a", "b")] == "a"

    def test_central_member_wins(self):
        vectors = {
            "a": np.array([1.0, 0.0]),
            "b": np.array([0.0, 1.0]),
            "c": np.array([1.0, 1.0]) / np.sqrt(2),
        }
        cluster = ("a", "b", "c")
        # oracle: exhaustive mean-cosine computation
        means = {
            rid: np.mean([vectors[rid] @ vectors[o] for o in cluster]) for rid in cluster
        }
        assert max(means, key=means.get) == "c"
        assert propose_representatives([cluster], vectors)[cluster] == "c"


def _taxonomy(spec):
    """spec: {action: (n_reasons, clip_count)}"""
    actions = {}
    for name, (n_reasons, clip_count) in spec.items():
        reasons = tuple(
            ReasonEntry(f"{name}-r{i}", f"{name} reason {i}", "knowledge-graph")
            for i in range(n_reasons)
        )
        actions[name] = ActionEntry(reasons=reasons, clip_count=clip_count)
    return ReasonTaxonomy(actions=actions)


class TestFilterFunnel:
    def test_reason_bound(self):
        taxonomy = _taxonomy({"a": (2, 100)})
        retained, _ = filter_funnel(taxonomy, min_reasons=3, min_clips=25)
        assert retained.actions == {}

    def test_clip_bound_is_strict_less_than(self):
        taxonomy = _taxonomy({"a": (5, 24), "b": (5, 25)})
        retained, _ = filter_funnel(taxonomy, min_reasons=3, min_clips=25)
        assert sorted(retained.actions) == ["b"]

    def test_stage_counts_on_synthetic_funnel(self):
        # Shape matches the published funnel: 9,759 collected actions, 139
        # with any reasons, 102 with >= 3, 25 with >= 25 clips.
        spec = {}
        for i in range(9_759):
            if i < 25:
                spec[f"a{i:05d}"] = (3, 25)
            elif i < 102:
                spec[f"a{i:05d}"] = (3, 10)
            elif i < 139:
                spec[f"a{i:05d}"] = (1, 50)
            else:
                spec[f"a{i:05d}"] = (0, 50)
        retained, report = filter_funnel(_taxonomy(spec), min_reasons=3, min_clips=25)
        assert report.counts() == (9_759, 139, 102, 25)
        assert len(retained.actions) == 25

    def test_idempotent(self):
        taxonomy = _taxonomy({"a": (4, 30), "b": (2, 30), "c": (5, 10)})
        once, _ = filter_funnel(taxonomy, 3, 25)
        twice, report = filter_funnel(once, 3, 25)
        assert twice == once
        assert report.counts()[0] == report.counts()[-1]


class TestAdmitCrowdReasons:
    EXISTING = [ReasonEntry("r1", "remove dirt", "knowledge-graph")]

    def _embeddings(self):
        return {
            "remove dirt": np.array([1.0, 0.0]),
            "fresh air": np.array([0.0, 1.0]),
            "wipe the dirt": np.array([0.99498744, 0.1]),
        }

    def test_count_bound(self):
        out = admit_crowd_reasons(["fresh air"] * 2, self.EXISTING,
                                  self._embeddings(), min_count=3, dup_threshold=0.9)
        assert out == []

    def test_admitted_when_frequent_and_orthogonal(self):
        out = admit_crowd_reasons(["fresh air"] * 3, self.EXISTING,
                                  self._embeddings(), min_count=3, dup_threshold=0.9)
        assert [r.label for r in out] == ["fresh air"]
        assert out[0].source == "crowd"

    def test_rejected_as_duplicate(self):
        # cosine with "remove dirt" is 0.9950 >= 0.9
        out = admit_crowd_reasons(["wipe the dirt"] * 5, self.EXISTING,
                                  self._embeddings(), min_count=3, dup_threshold=0.9)
        assert out == []

    def test_missing_embedding_names_the_text(self):
        with pytest.raises(TaxonomyError, match="mystery phrase"):
            admit_crowd_reasons(["mystery phrase"] * 3, self.EXISTING,
                                self._embeddings(), min_count=3, dup_threshold=0.9)
