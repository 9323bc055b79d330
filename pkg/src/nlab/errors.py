"""Exception and warning types raised across the package."""


class NlabError(Exception):
    """Base class for all errors raised by nlab."""


class DomainMismatchError(NlabError):
    pass


class InvalidExponentError(NlabError):
    pass


class ResolutionTooCoarseError(NlabError):
    pass


class EllipticityError(NlabError):
    pass


class ConvergenceError(NlabError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientBasisError(NlabError):
    pass


class DegenerateFieldError(NlabError):
    pass


class DegenerateComponentError(NlabError):
    pass


class NotADensityError(NlabError):
    pass


class UnbalancedMeasuresError(NlabError):
    pass


class UseRegularizedSolverError(NlabError):
    pass


class UnbalancedFieldError(NlabError):
    pass


class NotOrthogonalError(NlabError):
    pass


class InvalidSpectrumError(NlabError):
    pass


class InsufficientDataError(NlabError):
    pass


class InvalidCountError(NlabError):
    pass


class ConfigError(NlabError):
    """Experiment configuration failed validation.

    ``problems`` lists one diagnostic per offending field.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class BandlimitWarning(UserWarning):
    """Field energy outside the spectral basis exceeds the allowed tail."""


class PreconditionWarning(UserWarning):
    """An inequality was evaluated outside its stated hypotheses."""
