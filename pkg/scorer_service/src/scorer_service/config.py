"""Service configuration with pinned model identifiers."""

from __future__ import annotations

from dataclasses import dataclass, replace


class ConfigError(Exception):
    pass


BACKENDS = ("deterministic", "transformers")


@dataclass(frozen=True)
class ServiceConfig:
    """All model choices are pinned here by identifier, never hard-coded
    at the call site.  The desk-scale defaults are small public
    checkpoints; the ``deterministic`` backend ignores them and serves
    hash- and count-based scores with no model download at all.
    """

    backend: str = "deterministic"
    embedder_model: str = "sentence-transformers/all-MiniLM-L6-v2"
    nli_model: str = "roberta-large-mnli"
    text2text_model: str = "t5-small"
    embed_dim: int = 32          # 384 for the MiniLM embedder
    visual_dim: int = 1024       # incoming per-frame feature width
    visual_proj_dim: int = 64    # linear projection width for fused features
    device: str = "cpu"
    max_batch: int = 32
    max_text_chars: int = 4096   # longer inputs are truncated with a warning
    seed: int = 0
    host: str = "127.0.0.1"
    port: int = 7181

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}, expected one of {BACKENDS}")
        for name in ("embed_dim", "visual_dim", "visual_proj_dim", "max_batch",
                     "max_text_chars"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"port {self.port} outside [0, 65535]")

    def with_overrides(self, **kwargs) -> "ServiceConfig":
        return replace(self, **kwargs)


def load_config(path: str | None = None, overrides: dict | None = None) -> ServiceConfig:
    """Flat ``key = value`` file, same format as the pipeline configs."""
    values: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_no}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    values.update(overrides or {})
    coerced = {}
    for key, value in values.items():
        if key not in ServiceConfig.__dataclass_fields__:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(ServiceConfig(), key)
        if isinstance(current, bool):
            coerced[key] = str(value).lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            coerced[key] = int(value)
        elif isinstance(current, float):
            coerced[key] = float(value)
        else:
            coerced[key] = str(value)
    return ServiceConfig(**coerced)
