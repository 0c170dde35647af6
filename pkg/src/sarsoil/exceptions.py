"""Exception hierarchy shared by every sarsoil module."""


class SarSoilError(Exception):
    """Base class for all errors raised by sarsoil."""


class DomainError(SarSoilError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ConfigurationError(SarSoilError, ValueError):
    """Invalid option, range or network specification."""


class InputError(SarSoilError, ValueError):
    """Inconsistent or missing input data."""


class FormatError(SarSoilError, ValueError):
    """A file does not follow the expected layout.

    ``line`` and ``column`` are 1-based and ``None`` when unknown.
    """

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class FitError(SarSoilError, RuntimeError):
    """A calibration fit could not be performed or did not converge.

    ``best`` carries the best-so-far estimate when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TrainingError(SarSoilError, RuntimeError):
    """Network training failed (normal equations stayed singular)."""


class GridError(SarSoilError, ValueError):
    """Rasters do not share the same grid."""


class BoundsError(SarSoilError, ValueError):
    """A coordinate falls outside a raster's extent."""
