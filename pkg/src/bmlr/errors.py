"""Exception hierarchy shared across the package."""


class BMLRError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(BMLRError, ValueError):
    pass


class ConfigError(BMLRError, ValueError):
    pass


class SingularDesignError(BMLRError):
    """Stacked design is numerically rank deficient.

    ``condition`` holds the ratio of the smallest to the largest absolute
    diagonal entry of the triangular factor.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class RecoveryError(BMLRError):
    """Noiseless recovery was impossible or the input was inconsistent."""


class NoRootError(BMLRError):
    pass


class IllConditionedError(BMLRError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
