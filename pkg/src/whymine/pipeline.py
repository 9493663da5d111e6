"""Per-clip scoring pipelines tying the corpus to the pluggable scorers."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .config import PipelineConfig
from .corpus import ClipRecord, Corpus
from .scoring import (
    BLANK,
    ObjectDetection,
    ScorerClient,
    ScoringError,
    TimeSlotCaption,
    VectorStore,
    build_premise,
    cosine_select,
    dedup_captions,
    fitb_prompt,
    nli_hypothesis,
    softmax,
    threshold_select,
    tokenize,
)

METHODS = (
    "cosine-transcript",
    "cosine-vicinity",
    "nli-transcript",
    "nli-objects",
    "nli-captions",
    "nli-objects-captions",
    "fitb-transcript",
    "fitb-multimodal",
)

_PREMISE_SOURCE = {
    "nli-transcript": "transcript",
    "nli-objects": "objects",
    "nli-captions": "captions",
    "nli-objects-captions": "objects+captions",
}


class PipelineError(Exception):
    pass


def _normalize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def _embed(text: str, client: ScorerClient | None, store: VectorStore | None) -> np.ndarray:
    if store is not None and text in store:
        return _normalize(store.get(text))
    if client is not None:
        vec = _normalize(client.embed([text])[0])
        if store is not None:
            store.put(text, vec)
        return vec
    if store is not None:
        return _normalize(store.get(text))  # raises with the text named
    raise PipelineError("no embedding source (need a vector file or an endpoint)")


def _reason_labels(corpus: Corpus, clip: ClipRecord) -> dict[str, str]:
    entry = corpus.taxonomy.actions[clip.action]
    return {r.id: r.label for r in entry.reasons}


def _vicinity_text(clip: ClipRecord, config: PipelineConfig) -> str:
    """Window of tokens around the first causal marker in the excerpt;
    the whole excerpt when no marker is present."""
    tokens = tokenize(clip.excerpt)
    words = [t.text for t in tokens]
    for marker in config.markers:
        mwords = marker.lower().split()
        for p in range(len(words) - len(mwords) + 1):
            if words[p:p + len(mwords)] == mwords:
                a = max(0, p - config.vicinity_window)
                b = min(len(tokens), p + len(mwords) + config.vicinity_window)
                return clip.excerpt[tokens[a].start:tokens[b - 1].end]
    return clip.excerpt


def _action_surface(clip: ClipRecord, lexicon: Mapping[str, set] | None) -> str:
    """First token of the excerpt matching an inflection of the clip's
    action (the lemma itself when no lexicon is supplied)."""
    forms = set(lexicon[clip.action]) if lexicon and clip.action in lexicon else {clip.action}
    for tok in tokenize(clip.excerpt):
        if tok.text in forms:
            return tok.text
    raise PipelineError(
        f"clip {clip.clip_id}: no mention of action {clip.action!r} in excerpt"
    )


def score_clip(corpus: Corpus, clip: ClipRecord, method: str, config: PipelineConfig,
               *, client: ScorerClient | None = None,
               store: VectorStore | None = None,
               objects: Mapping[str, Sequence[ObjectDetection]] | None = None,
               captions: Mapping[str, Sequence[TimeSlotCaption]] | None = None,
               lexicon: Mapping[str, set] | None = None,
               visual_features: Mapping[str, Sequence[Sequence[float]]] | None = None,
               ) -> dict[str, float]:
    """Raw per-reason scores for one clip under the chosen method.

    Cosine scores are cosines, NLI scores entailment probabilities, FITB
    scores a softmax over length-normalized candidate log-likelihoods.
    """
    labels = _reason_labels(corpus, clip)
    if method in ("cosine-transcript", "cosine-vicinity"):
        text = clip.excerpt if method == "cosine-transcript" else _vicinity_text(clip, config)
        doc_vec = _embed(text, client, store)
        reason_vecs = {rid: _embed(label, client, store) for rid, label in labels.items()}
        _, scores = cosine_select(doc_vec, reason_vecs, config.cosine_threshold)
        return scores
    if method in _PREMISE_SOURCE:
        if client is None:
            raise PipelineError(f"method {method} requires a scorer endpoint")
        source = _PREMISE_SOURCE[method]
        kwargs = {}
        if source in ("transcript",):
            kwargs["excerpt"] = clip.excerpt
        if "objects" in source:
            if objects is None or clip.clip_id not in objects:
                raise PipelineError(f"clip {clip.clip_id}: missing object labels")
            kwargs["objects"] = objects[clip.clip_id]
        if "captions" in source:
            if captions is None or clip.clip_id not in captions:
                raise PipelineError(f"clip {clip.clip_id}: missing captions")
            deduped = dedup_captions(captions[clip.clip_id], config.dedup_overlap_fraction)
            kwargs["captions"] = [s.caption for s in deduped]
        premise = build_premise(source, object_confidence=config.object_confidence, **kwargs)
        ordered = list(labels)
        hypotheses = [nli_hypothesis(clip.action, labels[rid]) for rid in ordered]
        probs = client.nli(premise, hypotheses)
        return dict(zip(ordered, probs))
    if method in ("fitb-transcript", "fitb-multimodal"):
        if client is None:
            raise PipelineError(f"method {method} requires a scorer endpoint")
        surface = _action_surface(clip, lexicon)
        prompt = fitb_prompt(clip.excerpt, surface)
        ordered = list(labels)
        vf = None
        if method == "fitb-multimodal":
            if visual_features is None or clip.clip_id not in visual_features:
                raise PipelineError(f"clip {clip.clip_id}: missing visual features")
            vf = visual_features[clip.clip_id]
        lls = client.fitb(prompt, [labels[rid] for rid in ordered],
                          visual_features=vf,
                          visual_dim=len(vf[0]) if vf else None)
        return dict(zip(ordered, softmax(lls)))
    raise PipelineError(f"unknown scoring method: {method!r}")


def method_threshold(method: str, config: PipelineConfig) -> tuple[float, str]:
    """Active threshold and comparator for a method; cosine keeps its
    strict comparison, the model scorers use at-least."""
    if method.startswith("cosine"):
        return config.cosine_threshold, ">"
    if method.startswith("nli"):
        return config.nli_threshold, ">="
    return config.fitb_threshold, ">="


def score_clips(corpus: Corpus, clip_ids: Sequence[str], method: str,
                config: PipelineConfig, **sources
                ) -> tuple[dict[str, set[str]], dict[str, dict[str, float]]]:
    clips = corpus.clips_by_id()
    threshold, comparator = method_threshold(method, config)
    selections: dict[str, set[str]] = {}
    all_scores: dict[str, dict[str, float]] = {}
    for clip_id in clip_ids:
        scores = score_clip(corpus, clips[clip_id], method, config, **sources)
        all_scores[clip_id] = scores
        selections[clip_id] = threshold_select(scores, threshold, comparator)
    return selections, all_scores
