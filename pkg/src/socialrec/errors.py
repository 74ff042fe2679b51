"""Exception hierarchy. The CLI maps these onto exit codes."""


class SocialRecError(Exception):
    exit_code = 1


class ConfigError(SocialRecError, ValueError):
    """Invalid configuration key, value or combination."""

    exit_code = 1


class ShapeError(SocialRecError, ValueError):
    exit_code = 1


class DataError(SocialRecError):
    """Malformed or missing input data, bad cache or checkpoint files."""

    exit_code = 2


class CheckpointError(DataError):
    pass


class NumericalError(SocialRecError, ArithmeticError):
    """A NaN/Inf appeared in a forward value or a gradient."""

    exit_code = 3
