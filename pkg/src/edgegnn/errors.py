"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or mismatched configuration."""


class DimensionError(ValueError):
    """Shapes are not conformable."""


class NumericError(ArithmeticError):
    """A NaN or infinite value reached an op boundary."""


class ContractError(ValueError):
    """A call violated a documented precondition."""


class DomainError(ValueError):
    """Argument outside the mathematical domain (e.g. non-positive noise power)."""


class SizeError(ValueError):
    """Problem size outside the supported range."""


class GenerationError(RuntimeError):
    """A randomized generator could not satisfy its constraints."""
