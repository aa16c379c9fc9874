"""Exception types shared across the engine.

The CLI maps these onto process exit codes, so user-facing failures should
be raised as one of these rather than bare ValueError/RuntimeError.
"""


class EngineError(Exception):
    """Base class for all engine failures."""


class ValidationError(EngineError):
    """Bad arguments, malformed config, or violated preconditions. Exit code 2."""


class BackendError(EngineError):
    """Generation backend unreachable or misbehaving. Exit code 3."""

    def __init__(self, message: str, *, cache_key: str | None = None, retryable: bool = False):
        super().__init__(message)
        self.cache_key = cache_key
        self.retryable = retryable


class ProtocolError(BackendError):
    """Remote backend answered, but outside the wire contract."""

    def __init__(self, message: str, *, code: str = "protocol", cache_key: str | None = None):
        super().__init__(message, cache_key=cache_key, retryable=False)
        self.code = code


class StoreCorruptionError(EngineError):
    """Exemplar store failed integrity checks. Exit code 4."""


class TrainingDiverged(EngineError):
    """Non-finite loss encountered during optimisation."""
