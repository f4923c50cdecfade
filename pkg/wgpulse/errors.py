class InputError(SystemExit):
    """Parent class for input errors that don't print a stack trace."""
    exit_code = 2


class ConfigError(InputError):
    """Invalid or inconsistent scenario config, or a config set that cannot be expanded."""
    def __init__(self, message="The config file contains an error."):
        super().__init__(f"CONFIG ERROR: {message}")


class ArgumentError(InputError):
    """Command-line or function arguments outside the supported range."""
    def __init__(self, message="The parsed arguments contain an error."):
        super().__init__(f"ARGUMENT ERROR: {message}")


class EngineError(SystemExit):
    """Parent class for numerical failures of an engine.

    Carries an optional residual report (e.g. norm and excitation drift at the failing step)
    which the command line front end logs before exiting.
    """
    exit_code = 3
    prefix = "ENGINE ERROR"

    def __init__(self, message="The engine failed.", residuals=None):
        super().__init__(f"{self.prefix}: {message}")
        self.residuals = dict(residuals or {})


class TruncationError(EngineError):
    """Raised when the discarded weight of a single SVD split exceeds the truncation budget"""
    prefix = "TRUNCATION ERROR"


class BondDimensionError(EngineError):
    """Raised when a split needs more singular values than `max_bond` allows"""
    prefix = "BOND DIMENSION ERROR"


class SvdConvergenceError(EngineError):
    """Raised when neither LAPACK SVD driver converges"""
    prefix = "SVD ERROR"


class ConservationError(EngineError):
    """Raised when the norm or the excitation number of the state drifts"""
    prefix = "CONSERVATION ERROR"
