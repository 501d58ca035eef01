"""Exception types raised across the package."""


class ChainkitError(Exception):
    """Base class for library errors."""


class StructureMismatch(ChainkitError, ValueError):
    """Two trees (or a mask and a tree) do not line up."""


class ShapeError(ChainkitError, ValueError):
    """A leaf has the wrong shape, e.g. an inconsistent chain axis."""


class NonFiniteValue(ChainkitError, FloatingPointError):
    """A probe that must be finite was not."""


class NonInvertible(ChainkitError, ValueError):
    """A diffeomorphism failed to round-trip a point."""


class InsufficientChains(ChainkitError, ValueError):
    """A multi-chain statistic was given fewer than two chains."""


class InsufficientSamples(ChainkitError, ValueError):
    """A streaming statistic was extracted before enough points arrived."""


class DegenerateStatistic(ChainkitError, ValueError):
    """The statistic is undefined for the data seen, e.g. zero variance."""
