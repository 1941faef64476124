"""Exception hierarchy shared by the library and the command-line front end."""


class SemflowError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParameterError(SemflowError, ValueError):
    exit_code = 2


class ConfigurationError(SemflowError):
    exit_code = 3


class ParseError(ConfigurationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class GeometryError(SemflowError):
    exit_code = 4

    def __init__(self, message, element=None):
        self.element = element
        super().__init__(message)


class SplineError(GeometryError):
    pass


class DomainError(SemflowError, ValueError):
    """A closure formula was evaluated outside its domain of definition."""

    exit_code = 2


class SolverError(SemflowError):
    exit_code = 6

    def __init__(self, message, report=None, iteration=None):
        self.report = report
        self.iteration = iteration
        super().__init__(message)


class DivergenceError(SemflowError):
    exit_code = 5

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class StepError(SolverError):
    """A linear solve failed inside a time step."""
