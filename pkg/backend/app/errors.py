"""Exception hierarchy for the FedSim engine."""

from typing import Optional


class FedSimError(Exception):
    """Base class for every error raised by the engine."""


class ShapeError(FedSimError, ValueError):
    """Operand shapes do not agree."""


class UsageError(FedSimError):
    """An API was called out of order (e.g. backward without a valid cache)."""


class SpecError(FedSimError, ValueError):
    """A model spec does not compose."""


class LayoutError(FedSimError, ValueError):
    """Parameter layouts differ where they must match."""


class NumericError(FedSimError, ArithmeticError):
    """A non-finite value or an undefined quantity was encountered."""


class LabelError(FedSimError, ValueError):
    """A class label is outside [0, n)."""


class FormatError(FedSimError, ValueError):
    """A binary file could not be decoded."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class OptionError(FedSimError, ValueError):
    """Preprocessing options are incompatible with the input."""


class PartitionError(FedSimError, ValueError):
    """A partition scheme cannot be applied to the dataset."""


class ConfigError(FedSimError, ValueError):
    """Invalid experiment or federation configuration."""


class ProtocolError(FedSimError):
    """The federation round protocol could not complete."""

    def __init__(self, message: str, client_id: Optional[int] = None):
        self.client_id = client_id
        super().__init__(message)
