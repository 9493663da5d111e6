"""Multi-label metrics over each clip's candidate universe, per-action
macro-averaging, the most-frequent-reason baseline, and dev-set threshold
calibration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import ClipRecord, GoldRecord, Split

METRICS = ("accuracy", "precision", "recall", "f1")


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class InstanceEval:
    clip_id: str
    action: str
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float


def instance_metrics(gold: set[str], predicted: set[str],
                     candidates: Sequence[str], clip_id: str = "",
                     action: str = "") -> InstanceEval:
    """Per-label confusion counts over the clip's candidate universe.

    Zero-division conventions (per-label multi-label standard): empty
    prediction against empty gold has precision 1; recall of an empty
    gold set is 1; F1 is 0 when precision + recall is 0.
    """
    universe = set(candidates)
    if not gold <= universe:
        raise EvalError(f"clip {clip_id}: gold labels outside candidates")
    if not predicted <= universe:
        raise EvalError(f"clip {clip_id}: predicted labels outside candidates")
    tp = len(gold & predicted)
    fp = len(predicted - gold)
    fn = len(gold - predicted)
    tn = len(universe) - tp - fp - fn
    accuracy = (tp + tn) / len(universe) if universe else 0.0
    if tp + fp == 0:
        precision = 1.0 if not gold else 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return InstanceEval(clip_id=clip_id, action=action, tp=tp, fp=fp, fn=fn, tn=tn,
                        accuracy=accuracy, precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class EvalReport:
    method: str
    input_descriptor: str
    per_action: dict[str, dict[str, float]]  # action -> metric -> mean
    macro: dict[str, float]
    clip_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "input": self.input_descriptor,
            "per_action": {a: dict(m) for a, m in sorted(self.per_action.items())},
            "macro": dict(self.macro),
            "clip_counts": dict(sorted(self.clip_counts.items())),
        }

    def to_text(self) -> str:
        header = f"{'action':<16}{'clips':>6}" + "".join(f"{m:>11}" for m in METRICS)
        lines = [f"method: {self.method}  input: {self.input_descriptor}", header,
                 "-" * len(header)]
        for action in sorted(self.per_action):
            m = self.per_action[action]
            lines.append(
                f"{action:<16}{self.clip_counts[action]:>6}"
                + "".join(f"{100 * m[k]:>11.2f}" for k in METRICS)
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'macro':<16}{sum(self.clip_counts.values()):>6}"
            + "".join(f"{100 * self.macro[k]:>11.2f}" for k in METRICS)
        )
        return "\n".join(lines)


def macro_report(instances: Iterable[InstanceEval], method: str = "",
                 input_descriptor: str = "") -> EvalReport:
    """Unweighted mean of each metric per action, then an unweighted mean
    of the per-action means (actions count equally, not clips)."""
    by_action: dict[str, list[InstanceEval]] = {}
    for inst in instances:
        by_action.setdefault(inst.action, []).append(inst)
    if not by_action:
        raise EvalError("no instances to report")
    per_action = {}
    for action, evals in by_action.items():
        per_action[action] = {
            m: sum(getattr(e, m) for e in evals) / len(evals) for m in METRICS
        }
    macro = {
        m: sum(per_action[a][m] for a in per_action) / len(per_action) for m in METRICS
    }
    return EvalReport(
        method=method,
        input_descriptor=input_descriptor,
        per_action=per_action,
        macro=macro,
        clip_counts={a: len(evals) for a, evals in by_action.items()},
    )


def evaluate_predictions(gold: Mapping[str, GoldRecord],
                         predictions: Mapping[str, set[str]],
                         clips: Mapping[str, ClipRecord],
                         clip_ids: Sequence[str], method: str = "",
                         input_descriptor: str = "") -> EvalReport:
    instances = []
    for clip_id in clip_ids:
        clip = clips[clip_id]
        instances.append(
            instance_metrics(
                gold=set(gold[clip_id].gold_reason_ids),
                predicted=set(predictions.get(clip_id, set())),
                candidates=clip.candidate_reason_ids,
                clip_id=clip_id,
                action=clip.action,
            )
        )
    return macro_report(instances, method=method, input_descriptor=input_descriptor)


# ---------------------------------------------------------------------------
# Most-frequent-reason baseline


def most_frequent_baseline(gold: Mapping[str, GoldRecord],
                           clips: Mapping[str, ClipRecord],
                           split: Split, *, estimate_on: str = "test",
                           labels: Mapping[str, str] | None = None) -> dict[str, set[str]]:
    """Predict, for every test clip, the single reason most frequent in
    the gold labels of its action (frequency estimated on the test gold,
    matching the reported baseline; ``estimate_on='dev'`` for an honest
    variant).  Ties break on the lexicographically smallest label."""
    if estimate_on not in ("test", "dev"):
        raise EvalError(f"estimate_on must be 'test' or 'dev', got {estimate_on!r}")
    basis = split.test if estimate_on == "test" else split.dev
    counts: dict[str, dict[str, int]] = {}
    for clip_id in basis:
        clip = clips[clip_id]
        per_action = counts.setdefault(clip.action, {})
        for rid in gold[clip_id].gold_reason_ids:
            per_action[rid] = per_action.get(rid, 0) + 1
    top: dict[str, str] = {}
    for action, per_action in counts.items():
        def sort_key(rid: str):
            label = labels[rid] if labels else rid
            return (-per_action[rid], label)
        top[action] = min(per_action, key=sort_key) if per_action else None
    predictions: dict[str, set[str]] = {}
    for clip_id in split.test:
        choice = top.get(clips[clip_id].action)
        predictions[clip_id] = {choice} if choice else set()
    return predictions


# ---------------------------------------------------------------------------
# Threshold calibration


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    dev_f1: float
    grid: tuple[tuple[float, float], ...]  # (threshold, dev macro F1)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "dev_f1": self.dev_f1,
            "grid": [{"threshold": t, "f1": f} for t, f in self.grid],
        }


def calibrate_threshold(dev_scores: Mapping[str, Mapping[str, float]],
                        gold: Mapping[str, GoldRecord],
                        clips: Mapping[str, ClipRecord],
                        grid: Sequence[float], comparator: str = ">=") -> CalibrationResult:
    """Pick the grid threshold maximizing dev macro F1; ties go to the
    smallest threshold (favoring recall)."""
    from .scoring import threshold_select

    if not grid:
        raise EvalError("calibration grid is empty")
    swept = []
    for threshold in sorted(grid):
        instances = []
        for clip_id, scores in dev_scores.items():
            clip = clips[clip_id]
            predicted = threshold_select(scores, threshold, comparator)
            instances.append(
                instance_metrics(set(gold[clip_id].gold_reason_ids), predicted,
                                 clip.candidate_reason_ids, clip_id, clip.action)
            )
        swept.append((threshold, macro_report(instances).macro["f1"]))
    best_t, best_f1 = max(swept, key=lambda tf: (tf[1], -tf[0]))
    return CalibrationResult(threshold=best_t, dev_f1=best_f1, grid=tuple(swept))


# ---------------------------------------------------------------------------
# Predictions file


def write_predictions(path: str | Path, method: str,
                      selections: Mapping[str, set[str]],
                      scores: Mapping[str, Mapping[str, float]] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for clip_id in sorted(selections):
            rec = {
                "clip_id": clip_id,
                "method": method,
                "selected_reason_ids": sorted(selections[clip_id]),
            }
            if scores is not None and clip_id in scores:
                rec["scores"] = {k: float(v) for k, v in scores[clip_id].items()}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> tuple[dict[str, set[str]], dict[str, dict[str, float]], str]:
    selections: dict[str, set[str]] = {}
    scores: dict[str, dict[str, float]] = {}
    method = ""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                selections[rec["clip_id"]] = set(rec["selected_reason_ids"])
                if "scores" in rec:
                    scores[rec["clip_id"]] = {k: float(v) for k, v in rec["scores"].items()}
                method = rec.get("method", method)
    return selections, scores, method
