"""Fill-in-the-blank fine-tuning on unlabeled transcript sentences.

The training corpus must not contain the causal marker "because": the
whole point of the downstream task is to predict what follows it, so any
sentence containing the marker is held out.  The filter is a standalone
contract and refuses unfiltered corpora with the offending line number.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .backends import DeterministicBackend


class FinetuneError(Exception):
    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


def check_finetune_corpus(sentences: Sequence[str]) -> None:
    """Refuse any corpus with a sentence containing "because"."""
    for line_no, sentence in enumerate(sentences, 1):
        if "because" in sentence.lower().split():
            raise FinetuneError(
                f'line {line_no}: sentence contains the excluded marker "because"',
                line_no=line_no,
            )


def filter_corpus(sentences: Sequence[str]) -> list[str]:
    """Drop the marker-bearing sentences instead of refusing."""
    return [s for s in sentences if "because" not in s.lower().split()]


def finetune_fitb(backend: DeterministicBackend, sentences: Sequence[str],
                  checkpoint_path: str | Path) -> dict:
    """One training pass; saves a checkpoint the serving path can load.

    Returns the recorded training curve: loss on the training corpus
    before and after the pass (mean per-token negative log-likelihood).
    """
    if not isinstance(backend, DeterministicBackend):
        raise FinetuneError(
            "fine-tuning is implemented for the deterministic backend only; "
            "transformer fine-tuning is out of scope at desk scale")
    check_finetune_corpus(sentences)
    if not sentences:
        raise FinetuneError("empty training corpus")
    loss_before = backend.corpus_loss(sentences)
    payload = backend.train_unigram(sentences)
    backend.save_checkpoint(payload, checkpoint_path)
    backend.load_checkpoint(checkpoint_path)
    loss_after = backend.corpus_loss(sentences)
    return {
        "checkpoint": str(checkpoint_path),
        "sentences": len(sentences),
        "loss_before": loss_before,
        "loss_after": loss_after,
    }
