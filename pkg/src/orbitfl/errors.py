"""Exception types shared across the simulator."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class NoWaterError(InvalidInputError):
    """A mask contains no positive pixels."""


class NumericError(ArithmeticError):
    """A non-finite value reached the optimizer."""


class ConfigError(ValueError):
    """A scenario configuration failed validation.

    ``path`` names the offending field, e.g. ``constellation.altitude_km``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
