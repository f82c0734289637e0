"""Exception taxonomy shared across the engine.

CLI exit-status mapping: UsageError -> 1, data/format/config errors -> 2,
anything else -> 3.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid or mismatched configuration: shapes, layer chains, specs."""


class DataError(EngineError):
    """Malformed runtime data."""


class NonFiniteDataError(DataError):
    """Input tensor contains NaN or infinity."""


class UsageError(EngineError):
    """API misuse: argument out of range, empty input, wrong mode."""


class TrainingError(EngineError):
    """Training diverged or could not proceed."""


class NoReportYet(EngineError):
    """Stream has not emitted any classification step yet."""


class FormatError(DataError):
    """Base class for file-format violations."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(FormatError):
    """File ends before the declared payload is complete."""


class DuplicateNameError(FormatError):
    """Two entries in a weights file share a name."""


class VersionError(FormatError):
    """File declares an unsupported format version."""


class SpecParseError(FormatError):
    """Network spec document is malformed; message carries the location."""
