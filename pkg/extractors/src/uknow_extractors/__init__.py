"""Feature-extraction adapter emitting uknow-compatible manifests.

Reference backends (a pooled-grid image embedder, hashed bag-of-words
text embedder, color-blob detector, lexicon NER tagger, and template
captioner) run over a corpus directory and write a JSON-lines feature
manifest that the downstream graph builder consumes unchanged.
"""
from .backends import (
    CaptionBackend,
    DetectBackend,
    ImageEmbedBackend,
    NerBackend,
    TextEmbedBackend,
    known_models,
    load_detect_label_map,
    load_image,
    load_lexicon,
    load_model,
    load_ner_type_map,
)
from .config import DEFAULT_MODELS, EXTRACTOR_NAMES, ExtractorConfig, config_from_dict, load_config
from .errors import ConfigError, CorpusReadError, ExtractError, ModelLoadError
from .runner import Item, extract_features, read_corpus

__version__ = "0.1.0"

__all__ = [
    "CaptionBackend",
    "ConfigError",
    "CorpusReadError",
    "DEFAULT_MODELS",
    "DetectBackend",
    "EXTRACTOR_NAMES",
    "ExtractError",
    "ExtractorConfig",
    "ImageEmbedBackend",
    "Item",
    "ModelLoadError",
    "NerBackend",
    "TextEmbedBackend",
    "config_from_dict",
    "extract_features",
    "known_models",
    "load_config",
    "load_detect_label_map",
    "load_image",
    "load_lexicon",
    "load_model",
    "load_ner_type_map",
    "read_corpus",
]
