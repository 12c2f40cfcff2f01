"""Exception hierarchy shared by all iosw modules."""


class IOSWError(Exception):
    """Base class for every error raised by iosw."""


class StructuralError(IOSWError, ValueError):
    """Array shapes or label lists do not agree."""


class DegenerateSectorError(IOSWError, ValueError):
    """A sector has zero (or negative) total output."""

    def __init__(self, message, sector=None):
        super().__init__(message)
        self.sector = sector


class HawkinsSimonError(IOSWError, ValueError):
    """The technical-coefficient matrix describes a non-productive economy."""


class InconsistentInputsError(IOSWError, ValueError):
    """Operators built from mutually inconsistent A, x0 and v0."""


class InfeasibleStateError(IOSWError):
    """A model state maps to an IO table with negative final demand or value added."""

    def __init__(self, message, sectors=()):
        super().__init__(message)
        self.sectors = tuple(sectors)


class AdmissibilityError(IOSWError):
    """A derived price or quantity left the positive orthant."""

    def __init__(self, message, sector):
        super().__init__(message)
        self.sector = sector


class DivergenceError(AdmissibilityError):
    """The integrator could not restore admissibility by step halving."""

    def __init__(self, message, sector, t):
        super().__init__(message, sector)
        self.t = t


class ContractError(IOSWError):
    """An operation was called on a state that violates its precondition."""


class UnknownCountryError(IOSWError, LookupError):
    pass


class ReconciliationError(IOSWError):
    """Two tables cannot be paired into a fit problem."""


class FitAborted(IOSWError):
    """A single optimisation run could not continue."""


class EnsembleError(IOSWError):
    """Every restart of an ensemble aborted."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class UndefinedDirectionError(IOSWError, ValueError):
    """Both adjustment speeds of a sector are zero, so it has no direction."""


class EmptySliceError(IOSWError, ValueError):
    pass


class ParseError(IOSWError, ValueError):
    """Malformed input file. ``kind`` names the diagnostic class."""

    def __init__(self, message, kind, line=None, column=None, sector=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"[{kind}] " + (", ".join(where) + ": " if where else "")
        super().__init__(prefix + message)
        self.kind = kind
        self.line = line
        self.column = column
        self.sector = sector
