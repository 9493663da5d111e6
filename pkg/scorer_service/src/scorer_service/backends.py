"""Scoring backends.

The default ``deterministic`` backend serves hash-derived embeddings and
entailment scores, plus a count-based language model for fill-in-the-blank
likelihoods; it needs no downloads and is bit-stable across platforms.
The ``transformers`` backend loads the checkpoints pinned in the config.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ServiceConfig

BLANK = "_____"

# vocabulary size assumed by the untrained uniform language model; also
# the smoothing denominator offset after training
UNIFORM_VOCAB = 50_000


class BackendError(Exception):
    pass


def _hash_unit(key: str) -> float:
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
    return int(digest[:12], 16) / 16 ** 12


class DeterministicBackend:
    """Closed-form stand-in for the pretrained models.

    Embeddings and entailment scores are derived from hashes (stable,
    roughly uniform, no semantics).  Fill-in-the-blank likelihoods come
    from a unigram language model: uniform over a fixed vocabulary until
    :meth:`load_checkpoint` installs trained counts.
    """

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._unigram_counts: dict[str, int] | None = None
        self._unigram_total = 0

    @property
    def model_ids(self) -> dict[str, str]:
        suffix = "+unigram" if self._unigram_counts is not None else ""
        return {
            "embed": f"deterministic-hash-{self.config.embed_dim}d",
            "nli": "deterministic-hash",
            "fitb": f"deterministic-unigram{suffix}",
        }

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            digest = hashlib.sha256(
                f"service-embed\x1f{self.config.seed}\x1f{text}".encode("utf-8")
            ).digest()
            need = self.config.embed_dim * 4
            raw = digest
            while len(raw) < need:
                raw += hashlib.sha256(raw).digest()
            vec = np.frombuffer(raw[:need], dtype=np.uint32).astype(float)
            vec = vec - vec.mean() if vec.std() > 0 else vec + 1.0
            vec = vec / np.linalg.norm(vec)
            out.append([float(x) for x in vec])
        return out

    def nli(self, premise: str, hypotheses: Sequence[str]) -> list[float]:
        return [
            _hash_unit(f"service-nli\x1f{self.config.seed}\x1f{premise}\x1f{h}")
            for h in hypotheses
        ]

    # -- fill in the blank --------------------------------------------------

    def _token_logprob(self, token: str) -> float:
        if self._unigram_counts is None:
            return -math.log(UNIFORM_VOCAB)
        count = self._unigram_counts.get(token, 0)
        return math.log((count + 1) / (self._unigram_total + UNIFORM_VOCAB))

    def candidate_loglik(self, candidate: str) -> float:
        """Mean per-token log-probability (the length normalization the
        clients' softmax assumes)."""
        tokens = candidate.lower().split()
        if not tokens:
            raise BackendError("empty candidate")
        return sum(self._token_logprob(t) for t in tokens) / len(tokens)

    def fitb(self, prompt: str, candidates: Sequence[str],
             visual_features: Sequence[Sequence[float]] | None = None) -> list[float]:
        if prompt.count(BLANK) != 1:
            raise BackendError(f"prompt must contain exactly one {BLANK!r} blank")
        offset = 0.0
        if visual_features:
            rows = [list(map(float, row)) for row in visual_features]
            if any(len(row) != len(rows[0]) for row in rows):
                raise BackendError("ragged visual feature rows")
            # deterministic stand-in for feature fusion; an empty feature
            # sequence reduces exactly to the text-only score
            offset = 0.01 * _hash_unit(
                f"service-visual\x1f{self.config.seed}\x1f{json.dumps(rows)}")
        scores = []
        for candidate in candidates:
            jitter = 0.001 * _hash_unit(
                f"service-fitb\x1f{self.config.seed}\x1f{prompt}\x1f{candidate}")
            scores.append(self.candidate_loglik(candidate) + jitter + offset)
        return scores

    # -- checkpoints --------------------------------------------------------

    def train_unigram(self, sentences: Sequence[str]) -> dict:
        """One pass of count collection; returns the checkpoint payload."""
        counts: dict[str, int] = {}
        for sentence in sentences:
            for token in sentence.lower().split():
                counts[token] = counts.get(token, 0) + 1
        return {"kind": "unigram", "counts": counts}

    def corpus_loss(self, sentences: Sequence[str]) -> float:
        """Mean per-token negative log-likelihood under the current model."""
        total, n = 0.0, 0
        for sentence in sentences:
            for token in sentence.lower().split():
                total -= self._token_logprob(token)
                n += 1
        if n == 0:
            raise BackendError("empty corpus")
        return total / n

    def load_checkpoint(self, path: str | Path) -> None:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("kind") != "unigram":
            raise BackendError(f"{path}: not a unigram checkpoint")
        self._unigram_counts = dict(payload["counts"])
        self._unigram_total = sum(self._unigram_counts.values())

    @staticmethod
    def save_checkpoint(payload: dict, path: str | Path) -> None:
        Path(path).write_text(json.dumps(payload), encoding="utf-8")


class TransformersBackend:
    """Hosts the pinned public checkpoints.  Requires the ``models``
    extra and a local model cache; everything is lazy-loaded so the
    import of this module stays cheap."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._embedder = None
        self._nli = None
        self._t2t = None

    @property
    def model_ids(self) -> dict[str, str]:
        return {
            "embed": self.config.embedder_model,
            "nli": self.config.nli_model,
            "fitb": self.config.text2text_model,
        }

    def _load(self):
        import torch
        from transformers import (
            AutoModel,
            AutoModelForSeq2SeqLM,
            AutoModelForSequenceClassification,
            AutoTokenizer,
        )

        torch.manual_seed(self.config.seed)
        device = self.config.device
        if self._embedder is None:
            tok = AutoTokenizer.from_pretrained(self.config.embedder_model)
            model = AutoModel.from_pretrained(self.config.embedder_model).to(device).eval()
            self._embedder = (tok, model)
        if self._nli is None:
            tok = AutoTokenizer.from_pretrained(self.config.nli_model)
            model = AutoModelForSequenceClassification.from_pretrained(
                self.config.nli_model).to(device).eval()
            self._nli = (tok, model)
        if self._t2t is None:
            tok = AutoTokenizer.from_pretrained(self.config.text2text_model)
            model = AutoModelForSeq2SeqLM.from_pretrained(
                self.config.text2text_model).to(device).eval()
            self._t2t = (tok, model)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        import torch

        self._load()
        tok, model = self._embedder
        out = []
        with torch.no_grad():
            for start in range(0, len(texts), self.config.max_batch):
                batch = list(texts[start:start + self.config.max_batch])
                enc = tok(batch, padding=True, truncation=True, return_tensors="pt"
                          ).to(self.config.device)
                hidden = model(**enc).last_hidden_state
                mask = enc["attention_mask"].unsqueeze(-1)
                pooled = (hidden * mask).sum(1) / mask.sum(1)
                pooled = torch.nn.functional.normalize(pooled, dim=-1)
                out.extend(pooled.cpu().tolist())
        return out

    def nli(self, premise: str, hypotheses: Sequence[str]) -> list[float]:
        import torch

        self._load()
        tok, model = self._nli
        labels = {v.lower(): k for k, v in model.config.id2label.items()}
        entail = labels.get("entailment")
        if entail is None:
            raise BackendError(f"{self.config.nli_model}: no entailment label")
        scores = []
        with torch.no_grad():
            for hyp in hypotheses:
                enc = tok(premise, hyp, truncation=True, return_tensors="pt"
                          ).to(self.config.device)
                probs = torch.softmax(model(**enc).logits[0], dim=-1)
                scores.append(float(probs[entail]))
        return scores

    def fitb(self, prompt: str, candidates: Sequence[str],
             visual_features: Sequence[Sequence[float]] | None = None) -> list[float]:
        import torch

        if prompt.count(BLANK) != 1:
            raise BackendError(f"prompt must contain exactly one {BLANK!r} blank")
        self._load()
        tok, model = self._t2t
        sentinel = "<extra_id_0>"
        text = prompt.replace(BLANK, sentinel)
        scores = []
        with torch.no_grad():
            enc = tok(text, return_tensors="pt").to(self.config.device)
            for candidate in candidates:
                target = tok(f"{sentinel} {candidate}", return_tensors="pt"
                             ).input_ids.to(self.config.device)
                out = model(**enc, labels=target)
                # loss is already the mean per-token cross entropy
                scores.append(-float(out.loss))
        return scores
