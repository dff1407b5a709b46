"""Exception types shared across the package, with CLI exit-code mapping."""


class CgssmError(Exception):
    """Base class for all package errors."""


class ConfigError(CgssmError):
    """Invalid configuration. Carries every problem found, not just the first."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataFormatError(CgssmError):
    """Malformed input data. ``line`` is 1-based when it applies."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        if prefix:
            message = f"{prefix}: {message}"
        super().__init__(message)


class NumericalError(CgssmError):
    """Base for runtime numerical failures (exit code 4)."""


class DimensionError(NumericalError):
    """Provider output does not match the declared model dimensions."""


class SingularInnovationError(NumericalError):
    """Innovation covariance not invertible even after one jitter retry."""

    def __init__(self, t, detail=""):
        self.t = t
        msg = f"innovation covariance singular at t={t}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ImpossibleStateError(NumericalError):
    """Every indicator candidate has zero posterior probability at some t."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"all indicator candidates have zero probability at t={t}")


class ReductionRankError(NumericalError):
    """Loading matrix is rank deficient; the reduction is undefined."""


class DegenerateRegressionError(NumericalError):
    """Regression coefficient posterior precision is singular."""


class DegenerateBasisError(NumericalError):
    """Input data carries no variance; no basis can be extracted."""


class ZeroVarianceChainError(NumericalError):
    """Inefficiency factor is undefined for a constant chain."""


class SweepError(NumericalError):
    """A Gibbs sweep step failed. Wraps the cause and names the step."""

    def __init__(self, step, cause, iteration=None):
        self.step = step
        self.cause = cause
        self.iteration = iteration
        where = f"sweep step '{step}'"
        if iteration is not None:
            where += f" at iteration {iteration}"
        super().__init__(f"{where} failed: {cause}")


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def exit_code_for(exc):
    """Map an exception to the documented CLI exit code."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataFormatError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return 1
