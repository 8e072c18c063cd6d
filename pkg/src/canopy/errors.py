"""Exception hierarchy shared across the toolkit."""


class CanopyError(Exception):
    """Base class for all toolkit errors."""


class EmptyInputError(CanopyError):
    """An operation that requires at least one point received none."""


class InputFormatError(CanopyError):
    """A file or record could not be parsed.

    Carries an optional line number for CLI diagnostics.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class InvalidRecordError(CanopyError):
    """A stem or crown record violates its invariants (e.g. height <= 0)."""


class NotEligibleError(CanopyError):
    """Scoring was requested for a crown/stem pair that fails the gates."""


class DivergedDepthError(CanopyError):
    """Minimum-density extrapolation requested past the depth where the
    cumulative layer fraction reaches 1."""


class ForestSpecError(CanopyError):
    """A synthetic forest specification is inconsistent."""


class ProtocolViolationError(CanopyError):
    """The tile master received a message that its state machine forbids."""
