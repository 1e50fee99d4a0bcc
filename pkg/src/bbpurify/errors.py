"""Exception types shared across the toolkit."""


class TransportError(Exception):
    """Timeout or broken connection while talking to an external server.

    Retriable: the client retries once before giving up on the sample.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class ProtocolError(Exception):
    """Malformed or contract-violating server response. Not retriable."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class ManifestError(Exception):
    """Unreadable or malformed manifest / label CSV."""


class PurifyError(Exception):
    """A sample aborted mid-purification; carries the partial outcome."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
