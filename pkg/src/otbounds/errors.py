"""Exception hierarchy.

Every error carries the name of the module that raised it so the command
line front end can emit a machine readable error block.
"""

from __future__ import annotations


class OTBoundsError(Exception):
    module = "otbounds"

    def to_dict(self) -> dict:
        return {"type": type(self).__name__, "module": self.module, "message": str(self)}


class SchemaError(OTBoundsError, ValueError):
    module = "data"

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EmptySampleError(OTBoundsError, ValueError):
    module = "data"


class AssumptionViolationError(OTBoundsError, ValueError):
    module = "data"


class WeakInstrumentError(AssumptionViolationError):
    """Nonpositive empirical first stage in some covariate cell."""

    def __init__(self, message: str, cell=None):
        super().__init__(message)
        self.cell = cell


class IdentificationError(OTBoundsError, ValueError):
    module = "measures"


class DegenerateCellError(OTBoundsError, ValueError):
    module = "measures"


class ConfigurationError(OTBoundsError, ValueError):
    module = "config"


class SolverError(OTBoundsError, RuntimeError):
    module = "ot_dual"


class UnboundedDualError(SolverError):
    """The unrestricted dual is unbounded; happens only with signed weights."""


class EvaluationError(OTBoundsError, ArithmeticError):
    module = "bounds"


class BootstrapFailureError(OTBoundsError, RuntimeError):
    module = "inference"
