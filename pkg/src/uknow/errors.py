"""Exception types shared across the package.

Every data-dependent failure raises a subclass of :class:`UKnowError` so the
CLI can map it to a "data error" exit status.  Programming errors (bad
arguments, wrong shapes) raise plain ``ValueError``.
"""


class UKnowError(Exception):
    """Base class for all data errors raised by this package."""


class MalformedLineError(UKnowError):
    """A manifest line does not match the expected format."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class InvalidEventError(UKnowError):
    """An event label is not one of the canonical coarse categories."""


class SchemaError(UKnowError):
    """A record violates the documented manifest schema."""


class DuplicateIdError(UKnowError):
    """Two records share an id that must be unique."""

    def __init__(self, kind, offenders):
        self.kind = kind
        self.offenders = sorted(offenders)
        super().__init__(f"duplicate {kind}: {self.offenders}")


class DanglingOwnerError(UKnowError):
    """A feature record references an owner absent from the corpus."""


class UndefinedSimilarityError(UKnowError):
    """Cosine similarity requested against a zero vector."""


class UnknownCodeError(UKnowError):
    """An edge code outside the 000..113 registry was used."""

    def __init__(self, code):
        self.code = code
        super().__init__(f"unknown edge code: {code}")


class RegistryViolationError(UKnowError):
    """An index or registry entry falls outside its allowed range."""


class DanglingEdgeError(UKnowError):
    """An edge references a node id not present in the node table."""


class CorruptStoreError(UKnowError):
    """A persisted graph directory failed checksum or format validation."""


class MissingManifestError(UKnowError):
    """A graph directory does not contain the expected metadata file."""


class DivergenceError(UKnowError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")
