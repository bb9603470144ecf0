"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so raising the right class
matters more than the message text.
"""


class TagclError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(TagclError):
    """Invalid or inconsistent configuration (exit code 2)."""


class GraphFormatError(TagclError):
    """Malformed graph input files; carries a line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class TransportError(TagclError):
    """Remote service failure after exhausting retries (exit code 3)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class EmptyResponseError(TransportError):
    """The model returned an empty message; never cached."""


class NumericsError(TagclError):
    """Non-finite values or broken numerical contracts (exit code 4)."""


class PartialAugmentationError(TagclError):
    """Some nodes stayed unaugmented after retries (exit code 5)."""

    def __init__(self, failed_nodes, causes=None):
        self.failed_nodes = sorted(failed_nodes)
        self.causes = causes or {}
        super().__init__(
            f"augmentation failed for {len(self.failed_nodes)} node(s): "
            f"{self.failed_nodes[:20]}"
        )
