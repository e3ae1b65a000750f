"""Exception types shared across the lab."""


class MdlabError(Exception):
    pass


class NotPSD(MdlabError):
    """Covariance matrix has an eigenvalue below the clipping tolerance."""


class DomainError(MdlabError, ValueError):
    pass


class RangeError(MdlabError, ValueError):
    """Argument lies outside the admissible window of a closed-form bound."""


class BudgetViolation(MdlabError):
    pass


class Degenerate(MdlabError, ValueError):
    pass


class UnreliableEstimate(MdlabError):
    """Monte Carlo estimate dominated by a handful of samples."""


class QuadratureTooCoarse(MdlabError):
    pass


class ConditionDUncertified(MdlabError):
    pass


class WindowTooLarge(MdlabError, ValueError):
    pass


class WindowOverflow(MdlabError, ValueError):
    pass


class ValidationMismatch(MdlabError):
    """Root count inside the window disagrees with the winding number."""


class ConfigError(MdlabError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ManifestMismatch(MdlabError):
    pass


class IntegrityError(MdlabError):
    pass
