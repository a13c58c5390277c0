"""Exception types raised across the package."""


class BnAssessError(Exception):
    """Base class for all errors raised by bnassess."""


class ModelError(BnAssessError, ValueError):
    """A model definition violates a structural invariant."""


class StateSpaceError(ModelError):
    """The joint stochastic state space exceeds the enumeration cap."""


class ZeroMassError(BnAssessError, ArithmeticError):
    """Every configuration was ruled out by the evidence."""


class MomentMatchError(BnAssessError, ValueError):
    """Requested moments cannot come from a Beta or Dirichlet law."""


class ConvergenceError(BnAssessError, ValueError):
    """A convergence diagnostic is undefined for the supplied chains."""


class CalibrationError(BnAssessError, ValueError):
    """Calibration inputs are inconsistent or incomplete."""


class SchemaError(BnAssessError, ValueError):
    """A file does not conform to its documented schema."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
