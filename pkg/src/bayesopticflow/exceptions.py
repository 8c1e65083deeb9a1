class DimensionError(ValueError):
    """Array shapes or grids do not agree."""


class DomainError(ValueError):
    """Argument outside the domain of the operation."""


class InsufficientDataError(ValueError):
    """Not enough samples to form the requested statistic."""


class NumericalBreakdown(ArithmeticError):
    """NaN or Inf appeared inside an iterative solve."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class PGMParseError(ValueError):
    """Malformed PGM input. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset
