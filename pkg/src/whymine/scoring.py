"""Scorer surfaces: native lexical (cosine) selection, premise and prompt
construction for entailment and cloze scoring, caption dedup, and the
remote-scorer client.

Wire protocol (newline-delimited JSON over local TCP, or HTTP POST of the
same lines):

    request  {"id", "kind": "embed", "texts": [...]}
             {"id", "kind": "nli", "premise", "hypotheses": [...]}
             {"id", "kind": "fitb", "prompt", "candidates": [...],
              "visual_features": [[...]]?, "visual_dim"?}
             {"id", "kind": "health"}
    response {"id", "vectors": [[...]]} | {"id", "scores": [...]}
             | {"id", "error": "..."}
"""

from __future__ import annotations

import json
import math
import re
import socket
import time
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .textmine import CausalCandidate, context_window, tokenize

BLANK = "_____"


class ScoringError(Exception):
    pass


class TransportError(ScoringError):
    """Endpoint unreachable or unresponsive after retries."""


class ProtocolError(ScoringError):
    """Response did not match the wire protocol."""


class ScorerModelError(ScoringError):
    """Server-side model failure, propagated with the server message."""


# ---------------------------------------------------------------------------
# Embedding vector files


class VectorStore:
    """Embeddings keyed by exact text, loaded from a JSONL file of
    ``{"text": ..., "vector": [...]}`` records."""

    def __init__(self, vectors: Mapping[str, np.ndarray] | None = None):
        self._vectors: dict[str, np.ndarray] = {
            k: np.asarray(v, dtype=float) for k, v in (vectors or {}).items()
        }

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    vectors[rec["text"]] = np.asarray(rec["vector"], dtype=float)
        return cls(vectors)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for text in sorted(self._vectors):
                fh.write(json.dumps(
                    {"text": text, "vector": [float(x) for x in self._vectors[text]]},
                    ensure_ascii=False) + "\n")

    def __contains__(self, text: str) -> bool:
        return text in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, text: str) -> np.ndarray:
        if text not in self._vectors:
            raise ScoringError(f"missing embedding for text: {text!r}")
        return self._vectors[text]

    def put(self, text: str, vector) -> None:
        self._vectors[text] = np.asarray(vector, dtype=float)


# ---------------------------------------------------------------------------
# Lexical selectors


def cosine_select(doc_vector: np.ndarray, reason_vectors: Mapping[str, np.ndarray],
                  threshold: float = 0.1) -> tuple[set[str], dict[str, float]]:
    """Select reasons whose cosine with the document vector is strictly
    greater than the threshold.  Vectors must be unit-normalized."""
    doc_vector = np.asarray(doc_vector, dtype=float)
    scores = {}
    for rid, vec in reason_vectors.items():
        vec = np.asarray(vec, dtype=float)
        if vec.shape != doc_vector.shape:
            raise ScoringError(
                f"dimension mismatch for reason {rid}: {vec.shape} vs {doc_vector.shape}"
            )
        scores[rid] = float(doc_vector @ vec)
    selected = {rid for rid, s in scores.items() if s > threshold}
    return selected, scores


def vicinity_select(candidate: CausalCandidate, window: int,
                    reason_vectors: Mapping[str, np.ndarray], threshold: float,
                    store: VectorStore) -> tuple[set[str], dict[str, float]]:
    """cosine_select over the embedding of the marker's context window."""
    text = context_window(candidate, window)
    return cosine_select(store.get(text), reason_vectors, threshold)


# ---------------------------------------------------------------------------
# Premise / hypothesis / prompt construction


def nli_hypothesis(action: str, reason: str) -> str:
    if not action or not reason:
        raise ScoringError("action and reason must be non-empty")
    return f"The reason for {action} is {reason}."


PREMISE_SOURCES = ("transcript", "objects", "captions", "objects+captions")


@dataclass(frozen=True)
class ObjectDetection:
    label: str
    confidence: float


@dataclass(frozen=True)
class TimeSlotCaption:
    start_s: float
    end_s: float
    caption: str

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ScoringError(f"bad time slot [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def _object_premise(objects: Sequence[ObjectDetection], confidence: float) -> str:
    seen = []
    for det in objects:
        if det.confidence >= confidence and det.label not in seen:
            seen.append(det.label)  # order of first appearance
    return ", ".join(seen)


def _caption_premise(captions: Sequence[str]) -> str:
    seen = []
    for cap in captions:
        if cap not in seen:
            seen.append(cap)
    return ". ".join(seen)


def build_premise(source: str, *, excerpt: str | None = None,
                  objects: Sequence[ObjectDetection] | None = None,
                  captions: Sequence[str] | None = None,
                  object_confidence: float = 0.7) -> str:
    """Premise text for entailment scoring, from the requested artifact."""
    if source not in PREMISE_SOURCES:
        raise ScoringError(f"unknown premise source: {source!r}")
    if source == "transcript":
        if excerpt is None:
            raise ScoringError("transcript premise requires the clip excerpt")
        return excerpt
    if source == "objects":
        if objects is None:
            raise ScoringError("objects premise requires object detections")
        return _object_premise(objects, object_confidence)
    if source == "captions":
        if captions is None:
            raise ScoringError("captions premise requires captions")
        return _caption_premise(captions)
    if objects is None or captions is None:
        raise ScoringError("combined premise requires objects and captions")
    parts = [p for p in (_object_premise(objects, object_confidence),
                         _caption_premise(captions)) if p]
    return ". ".join(parts)


def dedup_captions(slots: Sequence[TimeSlotCaption],
                   overlap_fraction: float) -> list[TimeSlotCaption]:
    """Drop a slot when a strictly longer slot overlaps it over at least
    ``overlap_fraction`` of its duration; survivors ordered by start."""
    kept = []
    for a in slots:
        dropped = False
        for b in slots:
            if b is a or not b.duration_s > a.duration_s:
                continue
            overlap = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
            if overlap >= overlap_fraction * a.duration_s:
                dropped = True
                break
        if not dropped:
            kept.append(a)
    return sorted(kept, key=lambda s: (s.start_s, s.end_s))


_SENT_SPLIT = re.compile(r"((?<=[.!?])\s+)")


def fitb_prompt(excerpt: str, action_surface: str) -> str:
    """Insert one ``because _____`` blank at the end of the clause holding
    the first mention of the action: immediately before the sentence-final
    punctuation of the mention's sentence, or at its end if unpunctuated.
    All other characters of the excerpt are preserved."""
    surfaces = {t.text for t in tokenize(excerpt)}
    if action_surface.lower() not in surfaces:
        raise ScoringError(f"action mention {action_surface!r} not found in excerpt")
    pieces = _SENT_SPLIT.split(excerpt)  # separators kept at odd indices
    out = []
    inserted = False
    for i, piece in enumerate(pieces):
        if (not inserted and i % 2 == 0
                and action_surface.lower() in {t.text for t in tokenize(piece)}):
            stripped = piece.rstrip()
            trailing_ws = piece[len(stripped):]
            end = len(stripped)
            while end > 0 and stripped[end - 1] in ".!?":
                end -= 1
            body, punct = stripped[:end], stripped[end:]
            piece = f"{body} because {BLANK}{punct}{trailing_ws}"
            inserted = True
        out.append(piece)
    return "".join(out)


# ---------------------------------------------------------------------------
# Thresholding


def softmax(scores: Sequence[float]) -> list[float]:
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def threshold_select(scores: Mapping[str, float], threshold: float,
                     comparator: str = ">=") -> set[str]:
    """Select ids by comparator; ``>`` for cosine (per its strict wording),
    ``>=`` elsewhere."""
    if comparator not in (">", ">="):
        raise ScoringError(f"unknown comparator: {comparator!r}")
    for rid, s in scores.items():
        if not math.isfinite(s):
            raise ScoringError(f"non-finite score for {rid}")
    if comparator == ">":
        return {rid for rid, s in scores.items() if s > threshold}
    return {rid for rid, s in scores.items() if s >= threshold}


# ---------------------------------------------------------------------------
# Remote scorer client


@dataclass(frozen=True)
class ScorerRequest:
    kind: str  # embed | nli | fitb | health
    request_id: str
    texts: tuple[str, ...] = ()
    premise: str | None = None
    hypotheses: tuple[str, ...] = ()
    prompt: str | None = None
    candidates: tuple[str, ...] = ()
    visual_features: tuple[tuple[float, ...], ...] | None = None
    visual_dim: int | None = None

    def __post_init__(self):
        if self.kind == "embed" and not self.texts:
            raise ScoringError("embed request needs texts")
        if self.kind == "nli" and (self.premise is None or not self.hypotheses):
            raise ScoringError("nli request needs premise and hypotheses")
        if self.kind == "fitb" and (self.prompt is None or not self.candidates):
            raise ScoringError("fitb request needs prompt and candidates")
        if self.kind not in ("embed", "nli", "fitb", "health"):
            raise ScoringError(f"unknown request kind: {self.kind!r}")

    def to_json(self) -> str:
        payload: dict = {"id": self.request_id, "kind": self.kind}
        if self.kind == "embed":
            payload["texts"] = list(self.texts)
        elif self.kind == "nli":
            payload["premise"] = self.premise
            payload["hypotheses"] = list(self.hypotheses)
        elif self.kind == "fitb":
            payload["prompt"] = self.prompt
            payload["candidates"] = list(self.candidates)
            if self.visual_features is not None:
                payload["visual_features"] = [list(row) for row in self.visual_features]
                payload["visual_dim"] = self.visual_dim
        return json.dumps(payload, ensure_ascii=False)


class ScorerClient:
    """Client for the NDJSON scorer protocol over TCP (``host:port`` or
    ``tcp://host:port``) or HTTP (``http://...``).  Transient transport
    failures are retried with exponential backoff."""

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 3,
                 backoff_s: float = 0.1):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff_s = backoff_s
        self._counter = 0

    def next_id(self) -> str:
        self._counter += 1
        return f"req-{self._counter}"

    def _send_tcp(self, line: str) -> str:
        addr = self.endpoint
        for prefix in ("tcp://",):
            if addr.startswith(prefix):
                addr = addr[len(prefix):]
        host, _, port = addr.rpartition(":")
        with socket.create_connection((host or "127.0.0.1", int(port)),
                                      timeout=self.timeout) as sock:
            sock.sendall(line.encode("utf-8") + b"\n")
            buf = b""
            while not buf.endswith(b"\n"):
                chunk = sock.recv(65536)
                if not chunk:
                    break
                buf += chunk
        return buf.decode("utf-8")

    def _send_http(self, line: str) -> str:
        req = urllib.request.Request(
            self.endpoint, data=line.encode("utf-8") + b"\n",
            headers={"Content-Type": "application/x-ndjson"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read().decode("utf-8")

    def _roundtrip(self, line: str) -> str:
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                if self.endpoint.startswith(("http://", "https://")):
                    return self._send_http(line)
                return self._send_tcp(line)
            except (OSError, TimeoutError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff_s * (2 ** attempt))
        raise TransportError(
            f"scorer endpoint {self.endpoint} unreachable after "
            f"{self.retries + 1} attempts: {last_exc}"
        )

    def call(self, request: ScorerRequest) -> dict:
        raw = self._roundtrip(request.to_json()).strip()
        if not raw:
            raise ProtocolError("empty response from scorer")
        try:
            response = json.loads(raw.splitlines()[0])
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed scorer response: {exc}") from exc
        if response.get("id") != request.request_id:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not match request "
                f"{request.request_id!r}"
            )
        if "error" in response:
            raise ScorerModelError(response["error"])
        return response

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        response = self.call(ScorerRequest(kind="embed", request_id=self.next_id(),
                                           texts=tuple(texts)))
        vectors = response.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProtocolError("embed response shape mismatch")
        return [np.asarray(v, dtype=float) for v in vectors]

    def nli(self, premise: str, hypotheses: Sequence[str]) -> list[float]:
        response = self.call(ScorerRequest(kind="nli", request_id=self.next_id(),
                                           premise=premise,
                                           hypotheses=tuple(hypotheses)))
        scores = response.get("scores")
        if not isinstance(scores, list) or len(scores) != len(hypotheses):
            raise ProtocolError("nli response shape mismatch")
        if any(not (0.0 <= s <= 1.0) for s in scores):
            raise ProtocolError("nli scores outside [0, 1]")
        return [float(s) for s in scores]

    def fitb(self, prompt: str, candidates: Sequence[str],
             visual_features=None, visual_dim: int | None = None) -> list[float]:
        vf = None
        if visual_features is not None:
            vf = tuple(tuple(float(x) for x in row) for row in visual_features)
        response = self.call(ScorerRequest(kind="fitb", request_id=self.next_id(),
                                           prompt=prompt,
                                           candidates=tuple(candidates),
                                           visual_features=vf,
                                           visual_dim=visual_dim))
        scores = response.get("scores")
        if not isinstance(scores, list) or len(scores) != len(candidates):
            raise ProtocolError("fitb response shape mismatch")
        if any(not math.isfinite(s) for s in scores):
            raise ProtocolError("fitb scores must be finite")
        return [float(s) for s in scores]

    def health(self) -> dict:
        return self.call(ScorerRequest(kind="health", request_id=self.next_id()))


# ---------------------------------------------------------------------------
# Artifact files (object labels, captions)


def load_objects(path: str | Path) -> dict[str, list[ObjectDetection]]:
    """``objects.jsonl``: {"clip_id", "objects": [{"label", "confidence"}]}"""
    out: dict[str, list[ObjectDetection]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["clip_id"]] = [
                    ObjectDetection(o["label"], float(o["confidence"]))
                    for o in rec["objects"]
                ]
    return out


def load_captions(path: str | Path) -> dict[str, list[TimeSlotCaption]]:
    """``captions.jsonl``: {"clip_id", "slots": [{"start_s","end_s","caption"}]}"""
    out: dict[str, list[TimeSlotCaption]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["clip_id"]] = [
                    TimeSlotCaption(float(s["start_s"]), float(s["end_s"]), s["caption"])
                    for s in rec["slots"]
                ]
    return out
