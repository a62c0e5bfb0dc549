"""Exception types raised across the package.

Everything derives from :class:`ReldistillError` so callers (and the CLI)
can distinguish library validation failures from genuine bugs.
"""


class ReldistillError(Exception):
    """Base class for all errors raised by this package."""


class ZeroNormRow(ReldistillError):
    """A row had an l2 norm below the normalization epsilon."""

    def __init__(self, row: int, norm: float):
        self.row = row
        self.norm = norm
        super().__init__(f"row {row} has near-zero l2 norm {norm:.3e}")


class ShapeMismatch(ReldistillError):
    """Two operands had incompatible shapes."""


class NonPositiveTemperature(ReldistillError):
    """Contrastive temperature must be strictly positive."""


class BatchTooSmall(ReldistillError):
    """The operation needs at least two rows (off-diagonal pairs)."""


class EmptyGroup(ReldistillError):
    """A pooling group id in the declared range has no members."""

    def __init__(self, group: int):
        self.group = group
        super().__init__(f"group {group} has no members")


class LengthMismatch(ReldistillError):
    """A label vector does not match its companion matrix length."""


class NoSameLabelPairs(ReldistillError):
    """Tolerance is undefined: no pair of rows shares a label."""


class IndivisibleClusterCount(ReldistillError):
    """Point count is not divisible by the number of clusters."""


class NonFiniteLoss(ReldistillError):
    """Training produced a NaN/Inf loss or gradient."""

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        msg = f"non-finite loss at iteration {iteration}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class BadMagic(ReldistillError):
    """An embedding/label file does not start with the expected magic."""


class TruncatedPayload(ReldistillError):
    """File size disagrees with the payload size declared in the header."""


class UnsupportedDtype(ReldistillError):
    """The dtype code in an embedding file header is unknown."""


class ParseError(ReldistillError):
    """A text label file contained a malformed entry."""

    def __init__(self, line: int, content: str):
        self.line = line
        super().__init__(f"line {line}: cannot parse label from {content!r}")


class SchemaMismatch(ReldistillError):
    """A run record file declares an unknown format version."""


class InvariantViolation(ReldistillError):
    """A run record failed its internal consistency checks."""
