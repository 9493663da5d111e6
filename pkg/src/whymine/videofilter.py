"""Motion- and duration-based clip filtering, plus clip boundary
derivation from transcript alignment.

Frames arrive as grayscale matrices (numpy 2-D arrays) from a
frame-source directory of PGM files; no codec handling here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .corpus import ClipRecord, TranscriptDoc
from .textmine import Sentence


class VideoFilterError(Exception):
    pass


class UnscorableClip(VideoFilterError):
    """Fewer than two sampled frames; the clip cannot be motion-scored."""


@dataclass(frozen=True)
class MotionReport:
    clip_id: str
    sampled_frames: int
    correlations: tuple[float, ...]
    median: float

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "sampled_frames": self.sampled_frames,
            "correlations": list(self.correlations),
            "median": self.median,
        }


def corr2d(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation between two equal-size grayscale frames.

    A constant frame carries no motion information, so the correlation is
    defined as 1.0 there: static content must look maximally correlated
    and get filtered.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise VideoFilterError(f"frame shape mismatch: {a.shape} vs {b.shape}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise VideoFilterError("frames must be finite")
    da = a - a.mean()
    db = b - b.mean()
    denom = float(np.sqrt((da * da).sum() * (db * db).sum()))
    if denom == 0.0:
        return 1.0
    r = float((da * db).sum() / denom)
    return max(-1.0, min(1.0, r))


def motion_score(frames: list[np.ndarray], clip_id: str = "",
                 stride: int = 100) -> MotionReport:
    """Correlate every ``stride``-th frame with the next sampled frame and
    record the median correlation (even counts: mean of the middle two)."""
    if stride <= 0:
        raise VideoFilterError("stride must be > 0")
    sampled = frames[::stride]
    if len(sampled) < 2:
        raise UnscorableClip(
            f"clip {clip_id or '<unnamed>'}: {len(sampled)} sampled frame(s), need >= 2"
        )
    correlations = tuple(
        corr2d(sampled[i], sampled[i + 1]) for i in range(len(sampled) - 1)
    )
    return MotionReport(
        clip_id=clip_id,
        sampled_frames=len(sampled),
        correlations=correlations,
        median=float(np.median(correlations)),
    )


def keep_clip(clip: ClipRecord, report: MotionReport | None,
              config: PipelineConfig) -> tuple[bool, list[str]]:
    """Decide clip retention; the rejection list names every rule that
    fired.  Unscorable clips (report None) are kept motion-wise.

    Duration endpoints are kept: the bounds reject strictly shorter /
    strictly longer clips.
    """
    reasons = []
    if report is not None and report.median > config.motion_corr_threshold:
        reasons.append("low-motion")
    duration = clip.duration_s
    if duration < config.min_clip_s:
        reasons.append("too-short")
    if duration > config.max_clip_s:
        reasons.append("too-long")
    return (not reasons, reasons)


def align_clip(context_sentences: list[Sentence], doc: TranscriptDoc) -> tuple[float, float]:
    """Clip boundaries: the time hull of every caption segment overlapping
    the sentence and its context."""
    seg_indices = sorted({i for s in context_sentences for i in s.segment_indices})
    if not seg_indices:
        raise VideoFilterError("sentence maps to no caption segment")
    for i in seg_indices:
        if i < 0 or i >= len(doc.segments):
            raise VideoFilterError(f"segment index {i} outside transcript")
    segs = [doc.segments[i] for i in seg_indices]
    return (min(s.start_s for s in segs), max(s.end_s for s in segs))


# ---------------------------------------------------------------------------
# PGM frame source


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (plain P2 or binary P5)."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    i = 0
    # header: magic, width, height, maxval, with '#' comments allowed
    while len(fields) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        fields.append(data[i:j])
        i = j
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if maxval <= 0 or maxval > 255:
        raise VideoFilterError(f"{path}: unsupported maxval {maxval}")
    if magic == b"P5":
        i += 1  # single whitespace byte after maxval
        raster = np.frombuffer(data[i:i + width * height], dtype=np.uint8)
    elif magic == b"P2":
        raster = np.array([int(tok) for tok in data[i:].split()], dtype=np.uint8)
    else:
        raise VideoFilterError(f"{path}: not a PGM file (magic {magic!r})")
    if raster.size != width * height:
        raise VideoFilterError(f"{path}: raster size {raster.size} != {width}x{height}")
    return raster.reshape(height, width).astype(float)


_FRAME_INDEX = re.compile(r"(\d+)\.pgm$")


def load_clip_frames(frames_dir: str | Path, clip_id: str) -> list[np.ndarray]:
    """Frames for a clip from ``<frames_dir>/<clip_id>/<index>.pgm``,
    ordered by numeric index."""
    clip_dir = Path(frames_dir) / clip_id
    if not clip_dir.is_dir():
        raise VideoFilterError(f"no frame directory for clip {clip_id}: {clip_dir}")
    indexed = []
    for p in clip_dir.iterdir():
        m = _FRAME_INDEX.search(p.name)
        if m:
            indexed.append((int(m.group(1)), p))
    return [read_pgm(p) for _, p in sorted(indexed)]
