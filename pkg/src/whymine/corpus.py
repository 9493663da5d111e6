"""Data model, file formats, validation, and dataset splitting.

Corpus directory layout::

    transcripts.jsonl   one TranscriptDoc per line
    clips.jsonl         one ClipRecord per line
    taxonomy.json       ReasonTaxonomy
    annotations.jsonl   one AnnotationRecord per line
    split.json          optional {"dev": [...], "test": [...]}

All records are immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

SOURCES = ("knowledge-graph", "crowd")
MODALITIES = ("verbal", "visual", "both")
CONFIDENCES = ("high", "medium", "low")
NO_AGREEMENT = "no-agreement"


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    """Malformed JSON; carries file path and byte offset of the failure."""

    def __init__(self, path, line_no: int, byte_offset: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        self.byte_offset = byte_offset
        super().__init__(f"{path}:{line_no}: byte {byte_offset}: {message}")


@dataclass(frozen=True)
class ValidationIssue:
    file: str
    record_id: str
    message: str

    def __str__(self) -> str:
        return f"{self.file} [{self.record_id}]: {self.message}"


class ValidationError(CorpusError):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__(
            "corpus validation failed:\n" + "\n".join(f"  {i}" for i in issues)
        )


@dataclass(frozen=True)
class CaptionSegment:
    start_s: float
    end_s: float
    text: str


@dataclass(frozen=True)
class TranscriptDoc:
    video_id: str
    channel_id: str
    segments: tuple[CaptionSegment, ...]


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    video_id: str
    start_s: float
    end_s: float
    action: str
    candidate_reason_ids: tuple[str, ...]
    excerpt: str

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ReasonEntry:
    id: str
    label: str
    source: str  # knowledge-graph | crowd


@dataclass(frozen=True)
class ActionEntry:
    reasons: tuple[ReasonEntry, ...]
    clip_count: int


@dataclass(frozen=True)
class ReasonTaxonomy:
    actions: dict[str, ActionEntry]

    def reason_ids(self, action: str) -> tuple[str, ...]:
        return tuple(r.id for r in self.actions[action].reasons)

    def all_reason_ids(self) -> set[str]:
        return {r.id for a in self.actions.values() for r in a.reasons}


@dataclass(frozen=True)
class AnnotationRecord:
    clip_id: str
    worker_id: str
    selected_reason_ids: tuple[str, ...]
    other_reason_text: str | None
    modality: str
    confidence: str


@dataclass(frozen=True)
class GoldRecord:
    clip_id: str
    gold_reason_ids: tuple[str, ...]
    majority_confidence: str
    majority_modality: str
    per_reason_votes: dict[str, int]


@dataclass(frozen=True)
class Split:
    dev: tuple[str, ...]
    test: tuple[str, ...]


@dataclass
class Corpus:
    transcripts: list[TranscriptDoc]
    clips: list[ClipRecord]
    taxonomy: ReasonTaxonomy
    annotations: list[AnnotationRecord]
    split: Split | None = None

    def clips_by_id(self) -> dict[str, ClipRecord]:
        return {c.clip_id: c for c in self.clips}


# ---------------------------------------------------------------------------
# Parsing


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    offset = 0
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, 1):
            stripped = raw.strip()
            if stripped:
                try:
                    records.append(json.loads(stripped.decode("utf-8")))
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    pos = getattr(exc, "pos", 0)
                    raise ParseError(path, line_no, offset + pos, str(exc)) from exc
            offset += len(raw)
    return records


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.pos, exc.msg) from exc


def _transcript_from_dict(d: dict) -> TranscriptDoc:
    return TranscriptDoc(
        video_id=d["video_id"],
        channel_id=d["channel_id"],
        segments=tuple(
            CaptionSegment(float(s["start_s"]), float(s["end_s"]), s["text"])
            for s in d["segments"]
        ),
    )


def _clip_from_dict(d: dict) -> ClipRecord:
    return ClipRecord(
        clip_id=d["clip_id"],
        video_id=d["video_id"],
        start_s=float(d["start_s"]),
        end_s=float(d["end_s"]),
        action=d["action"],
        candidate_reason_ids=tuple(d["candidate_reason_ids"]),
        excerpt=d["excerpt"],
    )


def _taxonomy_from_dict(d: dict) -> ReasonTaxonomy:
    actions = {}
    for lemma, entry in d["actions"].items():
        actions[lemma] = ActionEntry(
            reasons=tuple(
                ReasonEntry(r["id"], r["label"], r["source"]) for r in entry["reasons"]
            ),
            clip_count=int(entry["clip_count"]),
        )
    return ReasonTaxonomy(actions=actions)


def _annotation_from_dict(d: dict) -> AnnotationRecord:
    return AnnotationRecord(
        clip_id=d["clip_id"],
        worker_id=d["worker_id"],
        selected_reason_ids=tuple(d["selected_reason_ids"]),
        other_reason_text=d.get("other_reason_text"),
        modality=d["modality"],
        confidence=d["confidence"],
    )


# ---------------------------------------------------------------------------
# Validation


def validate_corpus(corpus: Corpus, *, check_clip_bounds: bool = True,
                    min_clip_s: float = 10.0, max_clip_s: float = 180.0) -> list[ValidationIssue]:
    """Return every invariant violation found; empty list means valid."""
    issues: list[ValidationIssue] = []

    def bad(file: str, rid: str, msg: str) -> None:
        issues.append(ValidationIssue(file, rid, msg))

    seen_videos = set()
    for doc in corpus.transcripts:
        if doc.video_id in seen_videos:
            bad("transcripts.jsonl", doc.video_id, "duplicate video_id")
        seen_videos.add(doc.video_id)
        if not doc.segments:
            bad("transcripts.jsonl", doc.video_id, "segment list is empty")
        prev_start = None
        for i, seg in enumerate(doc.segments):
            if not seg.start_s >= 0:
                bad("transcripts.jsonl", doc.video_id, f"segment {i}: start_s < 0")
            if not seg.start_s < seg.end_s:
                bad("transcripts.jsonl", doc.video_id,
                    f"segment {i}: start_s {seg.start_s} >= end_s {seg.end_s}")
            if prev_start is not None and seg.start_s < prev_start:
                bad("transcripts.jsonl", doc.video_id,
                    f"segment {i}: out of order (start_s {seg.start_s})")
            prev_start = seg.start_s

    taxonomy = corpus.taxonomy
    for lemma, entry in taxonomy.actions.items():
        labels = [r.label for r in entry.reasons]
        if len(set(labels)) != len(labels):
            bad("taxonomy.json", lemma, "duplicate reason labels within action")
        ids = [r.id for r in entry.reasons]
        if len(set(ids)) != len(ids):
            bad("taxonomy.json", lemma, "duplicate reason ids within action")
        for r in entry.reasons:
            if r.source not in SOURCES:
                bad("taxonomy.json", lemma, f"reason {r.id}: bad source {r.source!r}")

    seen_clips = set()
    for clip in corpus.clips:
        if clip.clip_id in seen_clips:
            bad("clips.jsonl", clip.clip_id, "duplicate clip_id")
        seen_clips.add(clip.clip_id)
        if clip.action not in taxonomy.actions:
            bad("clips.jsonl", clip.clip_id, f"action {clip.action!r} not in taxonomy")
        else:
            expected = taxonomy.reason_ids(clip.action)
            if tuple(clip.candidate_reason_ids) != expected:
                bad("clips.jsonl", clip.clip_id,
                    "candidate_reason_ids differ from taxonomy reasons of the action")
        if check_clip_bounds:
            if not (min_clip_s <= clip.duration_s <= max_clip_s):
                bad("clips.jsonl", clip.clip_id,
                    f"duration {clip.duration_s:.2f}s outside [{min_clip_s}, {max_clip_s}]")

    clips_by_id = {c.clip_id: c for c in corpus.clips}
    per_clip_workers: dict[str, set[str]] = {}
    for ann in corpus.annotations:
        clip = clips_by_id.get(ann.clip_id)
        if clip is None:
            bad("annotations.jsonl", ann.clip_id, "unknown clip_id")
            continue
        extra = set(ann.selected_reason_ids) - set(clip.candidate_reason_ids)
        if extra:
            bad("annotations.jsonl", ann.clip_id,
                f"worker {ann.worker_id}: selected ids not in candidates: {sorted(extra)}")
        if ann.modality not in MODALITIES:
            bad("annotations.jsonl", ann.clip_id, f"bad modality {ann.modality!r}")
        if ann.confidence not in CONFIDENCES:
            bad("annotations.jsonl", ann.clip_id, f"bad confidence {ann.confidence!r}")
        per_clip_workers.setdefault(ann.clip_id, set()).add(ann.worker_id)
    # 3 records per clip is required only of clips that have any annotations:
    # partial pipelines (pre-annotation) are legal.
    for clip_id, workers in per_clip_workers.items():
        if len(workers) != 3:
            bad("annotations.jsonl", clip_id,
                f"expected 3 worker records, found {len(workers)}")

    if corpus.split is not None:
        dev, test = set(corpus.split.dev), set(corpus.split.test)
        if dev & test:
            bad("split.json", "-", f"dev/test overlap: {sorted(dev & test)[:5]}")
        if dev | test != seen_clips:
            bad("split.json", "-", "dev+test is not exactly the clip id set")

    return issues


# ---------------------------------------------------------------------------
# Load / save


def load_corpus(path: str | Path, *, strict: bool = True,
                check_clip_bounds: bool = True,
                min_clip_s: float = 10.0, max_clip_s: float = 180.0) -> Corpus:
    """Load and validate a corpus directory.

    With ``strict`` (the default) any invariant violation raises
    :class:`ValidationError`; otherwise issues are attached as warnings on
    the returned corpus (``corpus.warnings``).
    """
    root = Path(path)
    for required in ("transcripts.jsonl", "clips.jsonl", "taxonomy.json", "annotations.jsonl"):
        if not (root / required).exists():
            raise FileNotFoundError(root / required)

    transcripts = [_transcript_from_dict(d) for d in _read_jsonl(root / "transcripts.jsonl")]
    clips = [_clip_from_dict(d) for d in _read_jsonl(root / "clips.jsonl")]
    taxonomy = _taxonomy_from_dict(_read_json(root / "taxonomy.json"))
    annotations = [_annotation_from_dict(d) for d in _read_jsonl(root / "annotations.jsonl")]

    split = None
    split_path = root / "split.json"
    if split_path.exists():
        d = _read_json(split_path)
        split = Split(dev=tuple(d["dev"]), test=tuple(d["test"]))

    corpus = Corpus(transcripts, clips, taxonomy, annotations, split)
    issues = validate_corpus(corpus, check_clip_bounds=check_clip_bounds,
                             min_clip_s=min_clip_s, max_clip_s=max_clip_s)
    if issues and strict:
        raise ValidationError(issues)
    corpus.warnings = issues  # type: ignore[attr-defined]
    return corpus


def _segment_to_dict(s: CaptionSegment) -> dict:
    return {"start_s": s.start_s, "end_s": s.end_s, "text": s.text}


def transcript_to_dict(doc: TranscriptDoc) -> dict:
    return {
        "video_id": doc.video_id,
        "channel_id": doc.channel_id,
        "segments": [_segment_to_dict(s) for s in doc.segments],
    }


def clip_to_dict(c: ClipRecord) -> dict:
    return {
        "clip_id": c.clip_id,
        "video_id": c.video_id,
        "start_s": c.start_s,
        "end_s": c.end_s,
        "action": c.action,
        "candidate_reason_ids": list(c.candidate_reason_ids),
        "excerpt": c.excerpt,
    }


def taxonomy_to_dict(t: ReasonTaxonomy) -> dict:
    return {
        "actions": {
            lemma: {
                "reasons": [
                    {"id": r.id, "label": r.label, "source": r.source}
                    for r in entry.reasons
                ],
                "clip_count": entry.clip_count,
            }
            for lemma, entry in t.actions.items()
        }
    }


def annotation_to_dict(a: AnnotationRecord) -> dict:
    return {
        "clip_id": a.clip_id,
        "worker_id": a.worker_id,
        "selected_reason_ids": list(a.selected_reason_ids),
        "other_reason_text": a.other_reason_text,
        "modality": a.modality,
        "confidence": a.confidence,
    }


def gold_to_dict(g: GoldRecord) -> dict:
    return {
        "clip_id": g.clip_id,
        "gold_reason_ids": list(g.gold_reason_ids),
        "majority_confidence": g.majority_confidence,
        "majority_modality": g.majority_modality,
        "per_reason_votes": dict(g.per_reason_votes),
    }


def gold_from_dict(d: dict) -> GoldRecord:
    return GoldRecord(
        clip_id=d["clip_id"],
        gold_reason_ids=tuple(d["gold_reason_ids"]),
        majority_confidence=d["majority_confidence"],
        majority_modality=d["majority_modality"],
        per_reason_votes={k: int(v) for k, v in d["per_reason_votes"].items()},
    )


def write_jsonl(path: str | Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_jsonl(root / "transcripts.jsonl", [transcript_to_dict(d) for d in corpus.transcripts])
    write_jsonl(root / "clips.jsonl", [clip_to_dict(c) for c in corpus.clips])
    (root / "taxonomy.json").write_text(
        json.dumps(taxonomy_to_dict(corpus.taxonomy), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    write_jsonl(root / "annotations.jsonl", [annotation_to_dict(a) for a in corpus.annotations])
    if corpus.split is not None:
        (root / "split.json").write_text(
            json.dumps({"dev": list(corpus.split.dev), "test": list(corpus.split.test)}) + "\n",
            encoding="utf-8",
        )


# ---------------------------------------------------------------------------
# Splitting


def split_dataset(clips: list[ClipRecord], dev_fraction: float, seed: int,
                  manifest: Split | None = None) -> Split:
    """Deterministic dev/test partition over clip ids.

    An explicit manifest, when supplied, wins over the fraction (the
    published split of the source dataset does not match any plain
    rounding of its stated fraction, so re-derivation is not attempted).
    """
    ids = [c.clip_id for c in clips]
    if len(ids) < 2:
        raise CorpusError("cannot split fewer than 2 clips")
    if manifest is not None:
        dev, test = set(manifest.dev), set(manifest.test)
        if dev & test or (dev | test) != set(ids):
            raise CorpusError("split manifest is not an exact partition of the clip ids")
        return manifest
    if not 0.0 < dev_fraction < 1.0:
        raise CorpusError(f"dev_fraction {dev_fraction} outside (0, 1)")
    ordered = sorted(ids)
    random.Random(seed).shuffle(ordered)
    n_dev = round(dev_fraction * len(ordered))
    n_dev = min(max(n_dev, 1), len(ordered) - 1)  # both sides non-empty
    return Split(dev=tuple(sorted(ordered[:n_dev])), test=tuple(sorted(ordered[n_dev:])))
