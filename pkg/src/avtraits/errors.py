"""Exception classes shared across the package.

Everything raised on purpose derives from ``PipelineError`` so callers
(and the CLI) can catch one base class.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PipelineError):
    """Array dimensions do not satisfy an operation's contract."""


class ConfigError(PipelineError):
    """A configuration value is invalid or inconsistent."""


class InputError(PipelineError):
    """Input data violates a precondition (too short, empty, out of range)."""


class ValidationError(PipelineError):
    """A record failed validation; the message names the offending field."""


class FormatError(PipelineError):
    """A file does not match its documented format (magic, header, version)."""


class CorruptionError(PipelineError):
    """A file matches the format header but its body is inconsistent."""


class LoadError(PipelineError):
    """A referenced resource could not be resolved; the message names the path."""


class DivergenceError(PipelineError):
    """Training produced a non-finite loss."""
