"""Error taxonomy shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ContractError(ValueError):
    """A precondition of the requested operation is violated."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value
