"""Exception types raised by the solver."""


class EquiclassError(Exception):
    """Base class for all package errors."""


class InvalidModelError(EquiclassError, ValueError):
    """Model primitives are malformed (non-finite densities, bad parameters)."""


class ModelRejectedError(InvalidModelError):
    """Model is well-formed but violates a structural assumption such as MLRP."""


class UnsupportedFamilyError(EquiclassError, ValueError):
    """Operation requires a distribution family the model does not use."""


class IntegrationError(EquiclassError, RuntimeError):
    """Adaptive quadrature failed to converge."""


class NumericalFailureError(EquiclassError, RuntimeError):
    """Iterative numerical routine (bisection etc.) failed to converge."""


class GridSizeError(EquiclassError, ValueError):
    """Requested exhaustive grid exceeds the configured size limit."""


class ConfigError(EquiclassError, ValueError):
    """Config file violates the schema.

    ``field`` is the dotted path of the offending entry and ``line`` the
    1-based line number in the source file when it could be located.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
