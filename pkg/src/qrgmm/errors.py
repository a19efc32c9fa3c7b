"""Exception and warning types raised across the package."""


class QrgmmError(Exception):
    """Base class for all package errors.

    Errors raised while fitting a grid or a multi-output stage carry the
    offending quantile level in ``tau`` and the stage index in ``stage``.
    """

    tau = None
    stage = None

    def tag(self, **where):
        for key, value in where.items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self

    def __str__(self):
        msg = super().__str__()
        where = [f"{k}={getattr(self, k)}" for k in ("stage", "tau") if getattr(self, k) is not None]
        return f"{msg} ({', '.join(where)})" if where else msg


class ConfigError(QrgmmError, ValueError):
    """Invalid user input or configuration."""


class NumericalError(QrgmmError, ArithmeticError):
    """A numerical procedure could not produce a usable answer."""


class DimensionMismatch(ConfigError):
    pass


class NonFinite(ConfigError):
    pass


class InvalidTau(ConfigError):
    pass


class InvalidM(ConfigError):
    pass


class InvalidEps(ConfigError):
    pass


class EmptySample(ConfigError):
    pass


class SingletonSd(ConfigError):
    pass


class MissingConditioner(ConfigError):
    pass


class RankDeficient(NumericalError):
    """The (expanded) design matrix has rank below its column count."""


class FormatVersionMismatch(QrgmmError):
    pass


class CorruptFile(QrgmmError):
    pass


class NotConverged(UserWarning):
    """Iteration cap reached; the final iterate was returned anyway."""
