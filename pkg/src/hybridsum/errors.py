"""Exception hierarchy shared across the package."""


class HybridsumError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(HybridsumError):
    """Malformed corpus input or a violated corpus invariant."""


class RetrievalError(HybridsumError):
    """Index misuse: empty split, unknown document id, corrupt index file."""


class MetricError(HybridsumError):
    """Violated metric precondition (empty reference, degenerate counts, ...)."""


class ConfigError(HybridsumError):
    """Invalid run configuration; carries the offending key path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class BackendError(HybridsumError):
    """A backend failed to answer a request; carries the request id."""

    def __init__(self, request_id, message: str):
        super().__init__(f"request {request_id!r}: {message}")
        self.request_id = request_id


class ProtocolError(HybridsumError):
    """The backend violated the wire protocol (bad handshake, garbage line)."""
