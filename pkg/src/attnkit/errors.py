"""Error types shared across the toolkit.

Every error carries a short machine-readable ``code`` so the CLI can emit
stable error lines regardless of the human-readable message.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class FormatError(ToolkitError):
    """File does not look like the expected format at all (bad magic)."""

    code = "format-error"


class CorruptFileError(ToolkitError):
    """File has the right magic but inconsistent or truncated contents."""

    code = "corrupt-file"


class ValidationError(ToolkitError):
    """Data violates a documented invariant."""

    code = "validation-error"


class ParseError(ToolkitError):
    """Text corpus input could not be parsed."""

    code = "parse-error"


class AlignmentError(ToolkitError):
    """Extract segment and corpus sentence do not describe the same words."""

    code = "alignment-error"
