"""Pipeline configuration.

Every numeric constant used anywhere in the pipeline lives here; no stage
hard-codes its own thresholds.  Values can be overridden from a flat
``key = value`` config file and again from CLI flags.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unparseable config files or out-of-range values."""


DEFAULT_MARKERS = ("because", "since", "so that is why", "thus", "therefore")


@dataclass(frozen=True)
class PipelineConfig:
    # Causal-candidate mining
    marker_max_distance: int = 15  # tokens, strict upper bound
    markers: tuple[str, ...] = DEFAULT_MARKERS
    max_sentence_tokens: int = 60  # forced split bound for unpunctuated captions
    vicinity_window: int = 10  # tokens either side of the marker

    # Scorer thresholds
    cosine_threshold: float = 0.1  # strict >
    nli_threshold: float = 0.8  # >=
    fitb_threshold: float = 0.5  # >= , softmax-normalized; recalibrated on dev
    object_confidence: float = 0.7

    # Video filtering
    motion_corr_threshold: float = 0.8
    frame_sample_stride: int = 100
    min_clip_s: float = 10.0
    max_clip_s: float = 180.0

    # Taxonomy funnel and crowd admission
    min_reasons: int = 3
    min_clips: int = 25
    crowd_reason_min_count: int = 3
    crowd_dup_threshold: float = 0.9  # cosine; at or above counts as duplicate
    cluster_cut: float = 1.0  # Ward variance-increase cut; tune on dev data

    # Caption dedup
    dedup_overlap_fraction: float = 0.8

    # Dataset split
    dev_fraction: float = 0.2
    split_seed: int = 0

    # Annotation aggregation
    gold_quorum: int = 2
    annotators_per_clip: int = 3

    def __post_init__(self) -> None:
        checks = [
            (self.marker_max_distance > 0, "marker_max_distance must be > 0"),
            (len(self.markers) > 0, "markers must be non-empty"),
            (self.max_sentence_tokens > 0, "max_sentence_tokens must be > 0"),
            (self.vicinity_window > 0, "vicinity_window must be > 0"),
            (0.0 <= self.cosine_threshold <= 1.0, "cosine_threshold outside [0, 1]"),
            (0.0 <= self.nli_threshold <= 1.0, "nli_threshold outside [0, 1]"),
            (0.0 <= self.object_confidence <= 1.0, "object_confidence outside [0, 1]"),
            (-1.0 <= self.motion_corr_threshold <= 1.0,
             "motion_corr_threshold outside [-1, 1]"),
            (self.frame_sample_stride > 0, "frame_sample_stride must be > 0"),
            (0 <= self.min_clip_s <= self.max_clip_s,
             "need 0 <= min_clip_s <= max_clip_s"),
            (self.min_reasons >= 1, "min_reasons must be >= 1"),
            (self.min_clips >= 1, "min_clips must be >= 1"),
            (self.crowd_reason_min_count >= 1, "crowd_reason_min_count must be >= 1"),
            (0.0 <= self.crowd_dup_threshold <= 1.0,
             "crowd_dup_threshold outside [0, 1]"),
            (self.cluster_cut >= 0.0, "cluster_cut must be >= 0"),
            (0.0 < self.dedup_overlap_fraction <= 1.0,
             "dedup_overlap_fraction outside (0, 1]"),
            (0.0 < self.dev_fraction < 1.0, "dev_fraction outside (0, 1)"),
            (1 <= self.gold_quorum <= self.annotators_per_clip,
             "need 1 <= gold_quorum <= annotators_per_clip"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def replace(self, **kwargs) -> "PipelineConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["markers"] = list(self.markers)
        return d

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in fields:
                raise ConfigError(f"unknown config key: {key}")
            kwargs[key] = _coerce(key, raw, fields[key].type)
        return cls(**kwargs)


def _coerce(key: str, raw, type_name) -> object:
    """Coerce a raw (possibly string) value to the declared field type."""
    tn = type_name if isinstance(type_name, str) else getattr(type_name, "__name__", "")
    if tn.startswith("tuple"):
        if isinstance(raw, str):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(parts)
        return tuple(raw)
    if not isinstance(raw, str):
        return raw
    try:
        if tn == "int":
            return int(raw)
        if tn == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def load_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` config file into a raw mapping."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults <- config file <- explicit overrides."""
    mapping: dict = {}
    if path is not None:
        mapping.update(load_config_file(path))
    if overrides:
        mapping.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_mapping(mapping)
