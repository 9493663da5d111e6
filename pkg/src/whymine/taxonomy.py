"""Reason taxonomy construction: Ward clustering of near-duplicate
reasons, the action-retention funnel, and crowd-reason admission."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .corpus import ActionEntry, ReasonEntry, ReasonTaxonomy


class TaxonomyError(Exception):
    pass


def check_unit_vectors(vectors: Mapping[str, np.ndarray], tol: float = 1e-6) -> None:
    dims = {np.asarray(v).shape for v in vectors.values()}
    if len(dims) > 1:
        raise TaxonomyError(f"vector dimension mismatch: {sorted(dims)}")
    for key, v in vectors.items():
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > tol:
            raise TaxonomyError(f"vector for {key!r} is not unit-normalized (norm={norm})")


# ---------------------------------------------------------------------------
# Ward agglomerative clustering

ClusterKey = tuple[str, ...]  # sorted member ids


@dataclass(frozen=True)
class Merge:
    a: ClusterKey
    b: ClusterKey
    distance: float  # within-cluster variance increase of the merge


@dataclass(frozen=True)
class ClusterTree:
    leaves: tuple[str, ...]
    merges: tuple[Merge, ...]


def ward_tree(vectors: Mapping[str, np.ndarray]) -> ClusterTree:
    """Full agglomerative merge history under Ward's minimum-variance
    criterion, maintained with the Lance-Williams update.

    Merge distance is the increase in total within-cluster sum of squared
    deviations; for singletons that is ||x - y||^2 / 2.  Ties break on the
    lexicographically smallest (cluster-key, cluster-key) pair, so runs
    are deterministic.
    """
    if not vectors:
        raise TaxonomyError("need at least one vector")
    dims = {np.asarray(v).shape for v in vectors.values()}
    if len(dims) > 1:
        raise TaxonomyError(f"vector dimension mismatch: {sorted(dims)}")

    keys: list[ClusterKey] = [(rid,) for rid in sorted(vectors)]
    sizes: dict[ClusterKey, int] = {k: 1 for k in keys}
    points = {(rid,): np.asarray(vectors[rid], dtype=float) for rid in vectors}

    dist: dict[frozenset, float] = {}
    for i, ka in enumerate(keys):
        for kb in keys[i + 1:]:
            d = points[ka] - points[kb]
            dist[frozenset((ka, kb))] = float(d @ d) / 2.0

    merges: list[Merge] = []
    active = list(keys)
    while len(active) > 1:
        best = None
        for i, ka in enumerate(active):
            for kb in active[i + 1:]:
                pair = tuple(sorted((ka, kb)))
                cand = (dist[frozenset((ka, kb))], pair)
                if best is None or cand < best:
                    best = cand
        d_ab, (ka, kb) = best
        merged: ClusterKey = tuple(sorted(ka + kb))
        na, nb = sizes[ka], sizes[kb]
        for kc in active:
            if kc in (ka, kb):
                continue
            nc = sizes[kc]
            d_ac = dist[frozenset((ka, kc))]
            d_bc = dist[frozenset((kb, kc))]
            dist[frozenset((merged, kc))] = (
                (na + nc) * d_ac + (nb + nc) * d_bc - nc * d_ab
            ) / (na + nb + nc)
        active = [k for k in active if k not in (ka, kb)] + [merged]
        sizes[merged] = na + nb
        merges.append(Merge(a=ka, b=kb, distance=d_ab))

    return ClusterTree(leaves=tuple(sorted(vectors)), merges=tuple(merges))


def cut_tree(tree: ClusterTree, cut: float) -> list[ClusterKey]:
    """Partition obtained by applying only the merges with distance <= cut.

    Ward distances are non-decreasing, so this is a prefix of the merge
    history; smaller cuts therefore refine larger ones.
    """
    if cut < 0:
        raise TaxonomyError("cut must be >= 0")
    parent: dict[str, str] = {rid: rid for rid in tree.leaves}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for merge in tree.merges:
        if merge.distance > cut:
            break
        ra, rb = find(merge.a[0]), find(merge.b[0])
        parent[rb] = ra

    clusters: dict[str, list[str]] = {}
    for rid in tree.leaves:
        clusters.setdefault(find(rid), []).append(rid)
    return sorted(tuple(sorted(members)) for members in clusters.values())


def ward_cluster(vectors: Mapping[str, np.ndarray], cut: float) -> list[ClusterKey]:
    return cut_tree(ward_tree(vectors), cut)


def propose_representatives(partition: list[ClusterKey],
                            vectors: Mapping[str, np.ndarray]) -> dict[ClusterKey, str]:
    """Medoid per cluster: the member with the highest mean cosine to all
    cluster members; ties go to the lexicographically smallest id.  This
    is a default proposal for human review, not a final choice."""
    covered = {rid for cluster in partition for rid in cluster}
    if covered != set(vectors):
        raise TaxonomyError("partition does not cover exactly the vector ids")
    reps = {}
    for cluster in partition:
        best_id, best_score = None, None
        for rid in sorted(cluster):
            v = np.asarray(vectors[rid], dtype=float)
            score = float(np.mean([v @ np.asarray(vectors[o], dtype=float) for o in cluster]))
            if best_score is None or score > best_score + 1e-12:
                best_id, best_score = rid, score
        reps[cluster] = best_id
    return reps


# ---------------------------------------------------------------------------
# Retention funnel


@dataclass(frozen=True)
class FunnelReport:
    stages: tuple[tuple[str, int], ...]

    def counts(self) -> tuple[int, ...]:
        return tuple(n for _, n in self.stages)


def filter_funnel(taxonomy: ReasonTaxonomy, min_reasons: int,
                  min_clips: int) -> tuple[ReasonTaxonomy, FunnelReport]:
    """Drop actions with too few reasons or too few clips; report the
    action count surviving each stage."""
    initial = dict(taxonomy.actions)
    with_reasons = {a: e for a, e in initial.items() if len(e.reasons) >= 1}
    enough_reasons = {a: e for a, e in with_reasons.items() if len(e.reasons) >= min_reasons}
    enough_clips = {a: e for a, e in enough_reasons.items() if e.clip_count >= min_clips}
    report = FunnelReport(
        stages=(
            ("initial", len(initial)),
            ("with_reasons", len(with_reasons)),
            (f"at_least_{min_reasons}_reasons", len(enough_reasons)),
            (f"at_least_{min_clips}_clips", len(enough_clips)),
        )
    )
    return ReasonTaxonomy(actions=enough_clips), report


# ---------------------------------------------------------------------------
# Crowd-reason admission


def admit_crowd_reasons(freetexts: list[str], existing: list[ReasonEntry],
                        embeddings: Mapping[str, np.ndarray], min_count: int,
                        dup_threshold: float) -> list[ReasonEntry]:
    """Admit a free-text reason iff its exact-normalized count reaches
    ``min_count`` and its embedding stays below ``dup_threshold`` cosine
    with every existing reason of the action."""
    counts: dict[str, int] = {}
    for text in freetexts:
        norm = text.strip().lower()
        if norm:
            counts[norm] = counts.get(norm, 0) + 1

    def embed(text: str) -> np.ndarray:
        if text not in embeddings:
            raise TaxonomyError(f"missing embedding for text: {text!r}")
        return np.asarray(embeddings[text], dtype=float)

    existing_labels = {e.label.strip().lower() for e in existing}
    admitted = []
    for norm in sorted(counts):
        if counts[norm] < min_count or norm in existing_labels:
            continue
        v = embed(norm)
        duplicate = False
        for entry in existing:
            cos = float(v @ embed(entry.label.strip().lower()))
            if cos >= dup_threshold:
                duplicate = True
                break
        if not duplicate:
            admitted.append(ReasonEntry(id=f"crowd:{norm.replace(' ', '-')}",
                                        label=norm, source="crowd"))
    return admitted


def extend_taxonomy(taxonomy: ReasonTaxonomy,
                    admitted: Mapping[str, list[ReasonEntry]]) -> ReasonTaxonomy:
    """Append admitted crowd reasons to their actions."""
    actions = {}
    for lemma, entry in taxonomy.actions.items():
        extra = tuple(admitted.get(lemma, ()))
        actions[lemma] = ActionEntry(reasons=entry.reasons + extra,
                                     clip_count=entry.clip_count)
    return ReasonTaxonomy(actions=actions)
