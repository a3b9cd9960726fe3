"""Exception types shared across the package."""


class EnergyTestError(Exception):
    pass


class BoundsError(EnergyTestError, ValueError):
    """A stage marker falls outside the trace, or a stage is too short."""


class OrderError(EnergyTestError, ValueError):
    """Stage markers are out of order or use labels in a non-canonical order."""


class StageMissing(EnergyTestError, KeyError):
    """The requested stage does not exist in this staged trace."""


class DegenerateBaseline(EnergyTestError, ValueError):
    """A baseline power is zero or negative, so a ratio is undefined."""


class EfgError(EnergyTestError, ValueError):
    pass


class PathError(EnergyTestError, ValueError):
    """An input sequence is not a valid walk in the app's event-flow graph."""


class ConfigError(EnergyTestError, ValueError):
    pass


class InsufficientCorpus(EnergyTestError, ValueError):
    """Too few test cases in a category to run density clustering."""
