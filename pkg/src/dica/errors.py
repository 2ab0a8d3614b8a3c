"""Exception types raised by the dica package."""


class DicaError(Exception):
    """Base class for all dica errors."""


class ContradictoryEvidence(DicaError):
    """A product of messages vanished identically.

    This happens when hard evidence is inconsistent with the model, e.g. two
    deltas on different symbols meeting at a diverter.
    """


class DimensionError(DicaError, ValueError):
    """Message, table or index sizes do not agree."""


class CapacityError(DicaError):
    """The requested product space is too large."""


class FormatError(DicaError, ValueError):
    """A file could not be parsed or violates a model invariant."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissingLabelBlock(DicaError):
    """A label operation was requested on a model without a label table."""
