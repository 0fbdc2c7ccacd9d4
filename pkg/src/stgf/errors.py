"""Exception types shared across the package."""


class StgfError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(StgfError, ValueError):
    """Operand shapes violate an operation's contract."""


class ValidationError(StgfError, ValueError):
    """Input data or configuration violates a documented invariant."""


class LoadError(ValidationError):
    """A dataset or checkpoint on disk is missing, truncated, or inconsistent."""


class UsageError(StgfError):
    """Bad command-line flags, config keys, or argument combinations."""


class ContractError(StgfError, RuntimeError):
    """A caller-supplied callable or argument broke an API contract."""


class NumericalError(StgfError, RuntimeError):
    """A non-finite value appeared where the computation requires finite ones."""
