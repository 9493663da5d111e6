"""Aggregate worker labels into gold records; agreement, confidence,
modality, and whole-dataset statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import (
    NO_AGREEMENT,
    AnnotationRecord,
    Corpus,
    GoldRecord,
)
from .textmine import tokenize


class AggregationError(Exception):
    pass


def _majority(values: list[str]) -> str:
    """Strict majority; any tie for the top count is no-agreement."""
    counts = Counter(values).most_common()
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return NO_AGREEMENT
    return counts[0][0]


def aggregate_gold(records: list[AnnotationRecord], candidates: tuple[str, ...],
                   quorum: int = 2) -> GoldRecord:
    """Gold reasons are those voted by at least ``quorum`` workers."""
    if len(records) < quorum:
        raise AggregationError(
            f"clip {records[0].clip_id if records else '?'}: "
            f"{len(records)} annotation record(s), need >= {quorum}"
        )
    clip_id = records[0].clip_id
    votes = {rid: 0 for rid in candidates}
    for rec in records:
        if rec.clip_id != clip_id:
            raise AggregationError(f"mixed clip ids: {clip_id} vs {rec.clip_id}")
        for rid in set(rec.selected_reason_ids):
            if rid not in votes:
                raise AggregationError(f"clip {clip_id}: vote for non-candidate {rid}")
            votes[rid] += 1
    return GoldRecord(
        clip_id=clip_id,
        gold_reason_ids=tuple(rid for rid in candidates if votes[rid] >= quorum),
        majority_confidence=_majority([r.confidence for r in records]),
        majority_modality=_majority([r.modality for r in records]),
        per_reason_votes=votes,
    )


# ---------------------------------------------------------------------------
# Fleiss kappa


@dataclass(frozen=True)
class KappaResult:
    value: float
    degenerate: bool  # all rating mass in one category (chance agreement 1)


def fleiss_kappa(counts: np.ndarray) -> KappaResult:
    """Fleiss kappa over an items x categories count matrix with a fixed
    number of raters per item.

    kappa = (P_bar - Pe_bar) / (1 - Pe_bar), where P_bar averages the
    per-item pairwise agreement and Pe_bar is the chance agreement from
    the category marginals.  When every rating lands in one category the
    denominator vanishes; that case is reported as 1.0 with a flag.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[1] < 2:
        raise AggregationError("need an items x categories matrix with >= 2 categories")
    n_items, _ = counts.shape
    raters = counts.sum(axis=1)
    n = raters[0]
    if n < 2 or not np.all(raters == n):
        raise AggregationError("every item must have the same rater count (>= 2)")
    p_i = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (n_items * n)
    pe_bar = float((p_j * p_j).sum())
    if abs(1.0 - pe_bar) < 1e-12:
        return KappaResult(value=1.0, degenerate=True)
    return KappaResult(value=(p_bar - pe_bar) / (1.0 - pe_bar), degenerate=False)


# ---------------------------------------------------------------------------
# Agreement report


@dataclass(frozen=True)
class AgreementReport:
    per_reason_kappa: dict[tuple[str, str], float]  # (action, reason id)
    per_action_kappa: dict[str, float]
    overall_kappa: float
    degenerate_reasons: int
    confidence_tally: dict[str, int]
    modality_tally: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "per_reason_kappa": {
                f"{a}/{r}": v for (a, r), v in sorted(self.per_reason_kappa.items())
            },
            "per_action_kappa": dict(sorted(self.per_action_kappa.items())),
            "overall_kappa": self.overall_kappa,
            "degenerate_reasons": self.degenerate_reasons,
            "confidence_tally": self.confidence_tally,
            "modality_tally": self.modality_tally,
        }


def agreement_report(corpus: Corpus, quorum: int = 2) -> AgreementReport:
    """Per-reason Fleiss kappa (items = the action's annotated clips,
    binary voted/not), averaged unweighted per action and then overall.
    Degenerate reasons are excluded from the means and counted."""
    by_clip: dict[str, list[AnnotationRecord]] = {}
    for ann in corpus.annotations:
        by_clip.setdefault(ann.clip_id, []).append(ann)
    clips = {c.clip_id: c for c in corpus.clips}

    per_reason: dict[tuple[str, str], float] = {}
    degenerate = 0
    reason_items: dict[tuple[str, str], list[tuple[int, int]]] = {}
    confidence_tally: Counter = Counter()
    modality_tally: Counter = Counter()

    for clip_id, records in sorted(by_clip.items()):
        clip = clips[clip_id]
        n = len(records)
        for rid in clip.candidate_reason_ids:
            yes = sum(1 for r in records if rid in r.selected_reason_ids)
            reason_items.setdefault((clip.action, rid), []).append((yes, n - yes))
        confidence_tally[_majority([r.confidence for r in records])] += 1
        modality_tally[_majority([r.modality for r in records])] += 1

    for key, items in reason_items.items():
        result = fleiss_kappa(np.array(items, dtype=float))
        if result.degenerate:
            degenerate += 1
        else:
            per_reason[key] = result.value

    per_action: dict[str, float] = {}
    actions = sorted({a for a, _ in per_reason})
    for action in actions:
        vals = [v for (a, _), v in per_reason.items() if a == action]
        per_action[action] = float(np.mean(vals))
    overall = float(np.mean(list(per_action.values()))) if per_action else float("nan")

    return AgreementReport(
        per_reason_kappa=per_reason,
        per_action_kappa=per_action,
        overall_kappa=overall,
        degenerate_reasons=degenerate,
        confidence_tally=dict(confidence_tally),
        modality_tally=dict(modality_tally),
    )


# ---------------------------------------------------------------------------
# Dataset statistics


@dataclass(frozen=True)
class DatasetStats:
    clip_count: int
    video_hours: float
    transcript_words: int
    action_count: int
    reason_count: int
    modality_tally: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "clip_count": self.clip_count,
            "video_hours": round(self.video_hours, 1),
            "transcript_words": self.transcript_words,
            "action_count": self.action_count,
            "reason_count": self.reason_count,
            "modality_tally": self.modality_tally,
        }

    def to_text(self) -> str:
        rows = [
            ("Video-clips", f"{self.clip_count:,}"),
            ("Video hours", f"{self.video_hours:.1f}"),
            ("Transcript words", f"{self.transcript_words:,}"),
            ("Actions", str(self.action_count)),
            ("Reasons", str(self.reason_count)),
        ]
        for modality, count in sorted(self.modality_tally.items()):
            rows.append((f"Modality: {modality}", str(count)))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>9}" for name, value in rows)


def dataset_stats(corpus: Corpus) -> DatasetStats:
    """Headline statistics; video hours come from clip durations and word
    counts use the shared transcript tokenizer."""
    words = 0
    for doc in corpus.transcripts:
        for seg in doc.segments:
            words += len(tokenize(seg.text))
    by_clip: dict[str, list[AnnotationRecord]] = {}
    for ann in corpus.annotations:
        by_clip.setdefault(ann.clip_id, []).append(ann)
    modality_tally: Counter = Counter()
    for clip_id, records in by_clip.items():
        modality_tally[_majority([r.modality for r in records])] += 1
    return DatasetStats(
        clip_count=len(corpus.clips),
        video_hours=sum(c.duration_s for c in corpus.clips) / 3600.0,
        transcript_words=words,
        action_count=len(corpus.taxonomy.actions),
        reason_count=sum(len(e.reasons) for e in corpus.taxonomy.actions.values()),
        modality_tally=dict(modality_tally),
    )
