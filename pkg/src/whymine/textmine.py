"""Sentence segmentation, action-mention detection, and causal-candidate
extraction from transcripts.

Tokenization convention used everywhere downstream (including the
"word" in the marker-distance rule): lowercase, split on whitespace,
strip leading/trailing punctuation.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path

from .corpus import TranscriptDoc

_STRIP_CHARS = string.punctuation + "‘’“”"
_SENT_END = ".!?"


@dataclass(frozen=True)
class Token:
    text: str  # lowercased surface, punctuation-stripped
    start: int  # char span in the owning text
    end: int


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str
    tokens: tuple[Token, ...]
    start_s: float
    end_s: float
    segment_indices: tuple[int, ...]


@dataclass(frozen=True)
class Mention:
    lemma: str
    token_index: int
    surface: str


@dataclass(frozen=True)
class CausalCandidate:
    doc_id: str
    sentence_index: int
    lemma: str
    action_surface: str
    action_token_index: int  # position in the context token stream
    marker: str
    marker_token_index: int  # position of the marker's first token
    marker_token_count: int
    distance: int  # token steps between action and marker anchor
    context_text: str
    context_tokens: tuple[Token, ...]


def tokenize(text: str) -> list[Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        word = text[i:j]
        # strip leading/trailing punctuation, keep the span of the core
        a, b = 0, len(word)
        while a < b and word[a] in _STRIP_CHARS:
            a += 1
        while b > a and word[b - 1] in _STRIP_CHARS:
            b -= 1
        if b > a:
            tokens.append(Token(word[a:b].lower(), i + a, i + b))
        i = j
    return tokens


# ---------------------------------------------------------------------------
# Sentence segmentation


def segment_sentences(doc: TranscriptDoc, max_tokens: int = 60) -> list[Sentence]:
    """Split a transcript into sentences.

    Splits on sentence-final punctuation followed by whitespace; within a
    punctuation-free stretch, forces splits at caption-segment boundaries
    so no chunk exceeds ``max_tokens`` where a boundary allows it.  Every
    character of the joined transcript text lands in exactly one sentence.
    """
    chars: list[str] = []
    seg_of_char: list[int] = []
    seg_starts: set[int] = set()  # char positions where a new segment begins
    for i, seg in enumerate(doc.segments):
        if chars:
            chars.append(" ")
            seg_of_char.append(i - 1)
        seg_starts.add(len(chars))
        chars.extend(seg.text)
        seg_of_char.extend([i] * len(seg.text))
    text = "".join(chars)
    if not text.strip():
        return []

    # Pass 1: punctuation-based spans.  A sentence ends after a run of
    # sentence-final punctuation plus any following whitespace.
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _SENT_END:
            j = i + 1
            while j < n and text[j] in _SENT_END:
                j += 1
            if j >= n or text[j].isspace():
                while j < n and text[j].isspace():
                    j += 1
                spans.append((start, j))
                start = j
                i = j
                continue
        i += 1
    if start < n:
        spans.append((start, n))

    # Pass 2: forced splits at segment boundaries inside over-long spans.
    final_spans: list[tuple[int, int]] = []
    for a, b in spans:
        bounds = sorted(p for p in seg_starts if a < p < b)
        chunk_start = a
        for p in bounds:
            cur = len(tokenize(text[chunk_start:p]))
            nxt_end = next((q for q in bounds if q > p), b)
            nxt = len(tokenize(text[p:nxt_end]))
            if cur > 0 and cur + nxt > max_tokens:
                final_spans.append((chunk_start, p))
                chunk_start = p
        final_spans.append((chunk_start, b))

    # Merge token-less spans (pure punctuation/whitespace) into a neighbor
    # so the tokens-non-empty invariant holds while keeping full coverage.
    merged: list[tuple[int, int]] = []
    for a, b in final_spans:
        if tokenize(text[a:b]):
            merged.append((a, b))
        elif merged:
            pa, _ = merged[-1]
            merged[-1] = (pa, b)
        else:
            merged.append((a, b))
    if merged and not tokenize(text[merged[0][0]:merged[0][1]]) and len(merged) > 1:
        a0, b0 = merged.pop(0)
        a1, b1 = merged[0]
        merged[0] = (a0, b1)

    sentences = []
    for idx, (a, b) in enumerate(merged):
        seg_idx = sorted({seg_of_char[p] for p in range(a, b)})
        covering = [doc.segments[i] for i in seg_idx]
        sentences.append(
            Sentence(
                doc_id=doc.video_id,
                index=idx,
                text=text[a:b],
                tokens=tuple(tokenize(text[a:b])),
                start_s=min(s.start_s for s in covering),
                end_s=max(s.end_s for s in covering),
                segment_indices=tuple(seg_idx),
            )
        )
    return sentences


# ---------------------------------------------------------------------------
# Action lexicon


def load_lexicon(path: str | Path) -> dict[str, set[str]]:
    """Lexicon file: JSON map of verb lemma -> list of inflected forms."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    lexicon: dict[str, set[str]] = {}
    for lemma, forms in raw.items():
        if lemma != lemma.lower():
            raise ValueError(f"lexicon lemma not lowercase: {lemma!r}")
        if not forms:
            raise ValueError(f"lexicon lemma {lemma!r} has an empty inflection set")
        lexicon[lemma] = {f.lower() for f in forms}
    return lexicon


def _surface_index(lexicon: dict[str, set[str]]) -> dict[str, list[str]]:
    index: dict[str, list[str]] = {}
    for lemma in sorted(lexicon):
        for form in lexicon[lemma]:
            index.setdefault(form, []).append(lemma)
    return index


def find_action_mentions(sentence: Sentence, lexicon: dict[str, set[str]]) -> list[Mention]:
    if not lexicon:
        raise ValueError("lexicon is empty")
    index = _surface_index(lexicon)
    mentions = []
    for i, tok in enumerate(sentence.tokens):
        for lemma in index.get(tok.text, ()):
            mentions.append(Mention(lemma=lemma, token_index=i, surface=tok.text))
    return mentions


# ---------------------------------------------------------------------------
# Causal candidates


def _marker_occurrences(tokens: tuple[Token, ...],
                        markers: tuple[str, ...]) -> list[tuple[str, int, int]]:
    """(marker, first-token index, token count) for every occurrence.

    Multi-word markers match as contiguous token sequences anchored at
    their first token.
    """
    words = [t.text for t in tokens]
    found = []
    for marker in markers:
        mwords = marker.lower().split()
        k = len(mwords)
        for p in range(len(words) - k + 1):
            if words[p:p + k] == mwords:
                found.append((marker, p, k))
    return found


def extract_causal_candidates(sentences: list[Sentence], lexicon: dict[str, set[str]],
                              markers: tuple[str, ...],
                              max_distance: int) -> list[CausalCandidate]:
    """One candidate per (action mention, marker occurrence) pair whose
    token distance over the sentence-plus-context token stream is strictly
    below ``max_distance``."""
    if max_distance <= 0:
        raise ValueError("max_distance must be > 0")
    candidates = []
    for i, sent in enumerate(sentences):
        mentions = find_action_mentions(sent, lexicon)
        if not mentions:
            continue
        ctx = [s for s in (sentences[i - 1] if i > 0 else None, sent,
                           sentences[i + 1] if i + 1 < len(sentences) else None)
               if s is not None]
        context_text = " ".join(s.text.strip() for s in ctx)
        context_tokens = tuple(tokenize(context_text))
        offset = 0
        for s in ctx:
            if s is sent:
                break
            offset += len(s.tokens)
        occurrences = _marker_occurrences(context_tokens, markers)
        for mention in mentions:
            action_pos = offset + mention.token_index
            for marker, pos, count in occurrences:
                distance = abs(action_pos - pos)
                if 0 < distance < max_distance:
                    candidates.append(
                        CausalCandidate(
                            doc_id=sent.doc_id,
                            sentence_index=i,
                            lemma=mention.lemma,
                            action_surface=mention.surface,
                            action_token_index=action_pos,
                            marker=marker,
                            marker_token_index=pos,
                            marker_token_count=count,
                            distance=distance,
                            context_text=context_text,
                            context_tokens=context_tokens,
                        )
                    )
    return candidates


def context_window(candidate: CausalCandidate, window: int) -> str:
    """Substring spanning ``window`` tokens before and after the marker,
    clamped to the context bounds."""
    if window <= 0:
        raise ValueError("window must be > 0")
    toks = candidate.context_tokens
    a = max(0, candidate.marker_token_index - window)
    b = min(len(toks), candidate.marker_token_index + candidate.marker_token_count + window)
    return candidate.context_text[toks[a].start:toks[b - 1].end]
