"""Exception taxonomy shared across the package.

All of these derive from ValueError so callers that only care about
"bad input" can catch one base class. The CLI maps them onto exit codes:
ConfigError -> 2, DataError/FormatError (and subclasses) -> 3.
"""


class ShapeError(ValueError):
    """Array dimensions incompatible with an operation."""


class ConfigError(ValueError):
    """Invalid or unknown configuration key/value."""


class DataError(ValueError):
    """Dataset content violates a precondition (missing class, bad labels...)."""


class LayoutError(DataError):
    """Channel missing from an electrode layout, or layout malformed."""


class ParseError(DataError):
    """Malformed text input; message carries the offending line number."""


class FormatError(ValueError):
    """Binary container violates the on-disk format (magic, version, truncation)."""
