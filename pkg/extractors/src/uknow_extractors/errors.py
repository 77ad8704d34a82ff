"""Exception types for the extraction adapter."""


class ExtractError(Exception):
    """Base class for adapter errors."""


class ConfigError(ExtractError):
    """The extractor configuration violates an invariant."""


class ModelLoadError(ExtractError):
    """A model identifier or its shipped tables cannot be resolved."""


class CorpusReadError(ExtractError):
    """A corpus manifest is missing or malformed."""
