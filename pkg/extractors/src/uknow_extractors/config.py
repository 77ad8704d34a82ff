"""Extractor configuration: which extractors run and with which models.

A configuration is a JSON object::

    {"extractors": ["image_embed", "text_embed", "detect", "ner", "caption"],
     "models": {"detect": "color-blob-v1"},
     "dim": 64, "batch_size": 8, "device": "cpu"}

Only ``extractors`` is required.  ``models`` overrides the default model
identifier per extractor; ``dim`` is the dimension every emitted vector
must have; ``device`` is a hint the reference backends ignore.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

EXTRACTOR_NAMES = ("image_embed", "caption", "detect", "text_embed", "ner")

DEFAULT_MODELS = {
    "image_embed": "grid-gist-v1",
    "caption": "color-template-v1",
    "detect": "color-blob-v1",
    "text_embed": "bow-hash-v1",
    "ner": "caps-lexicon-v1",
}

_KNOWN_KEYS = {"extractors", "models", "dim", "batch_size", "device"}


@dataclass(frozen=True)
class ExtractorConfig:
    extractors: tuple[str, ...]
    models: dict[str, str] = field(default_factory=dict)
    dim: int = 64
    batch_size: int = 8
    device: str = "cpu"

    def model_for(self, extractor: str) -> str:
        return self.models.get(extractor, DEFAULT_MODELS[extractor])

    def enabled(self, extractor: str) -> bool:
        return extractor in self.extractors


def config_from_dict(obj: dict) -> ExtractorConfig:
    """Validate a parsed JSON object into an ExtractorConfig."""
    if not isinstance(obj, dict):
        raise ConfigError(f"config must be a JSON object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    raw = obj.get("extractors")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'extractors' must be a nonempty list")
    extractors = tuple(str(name) for name in raw)
    bad = sorted(set(extractors) - set(EXTRACTOR_NAMES))
    if bad:
        raise ConfigError(f"unknown extractors {bad}; choices are {list(EXTRACTOR_NAMES)}")
    if len(set(extractors)) != len(extractors):
        raise ConfigError("duplicate extractor names")
    models = obj.get("models", {})
    if not isinstance(models, dict):
        raise ConfigError("'models' must be an object")
    bad = sorted(set(models) - set(EXTRACTOR_NAMES))
    if bad:
        raise ConfigError(f"model overrides for unknown extractors {bad}")
    models = {str(k): str(v) for k, v in models.items()}
    dim = int(obj.get("dim", 64))
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    batch_size = int(obj.get("batch_size", 8))
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    device = str(obj.get("device", "cpu"))
    return ExtractorConfig(extractors=extractors, models=models, dim=dim,
                           batch_size=batch_size, device=device)


def load_config(path: str | Path) -> ExtractorConfig:
    """Load and validate a configuration file."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(obj)
