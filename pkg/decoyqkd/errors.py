class QKDError(Exception):
    """
    Base class of every error raised by decoyqkd.
    """
    pass


class ParameterError(QKDError, ValueError):
    """
    An input lies outside the domain of the model or estimator.
    """
    pass


class UnsupportedModeError(ParameterError):
    """
    A computation mode or response kind is not available for the given source.
    """
    pass


class NoSolutionError(QKDError, RuntimeError):
    """
    A root or bound does not exist on the requested bracket.
    """
    pass


class InfeasibleConstraintsError(QKDError, RuntimeError):
    """
    The linear constraints built from the observations have no feasible point.
    """

    def __init__(self, msg, solver_message=None):
        super(InfeasibleConstraintsError, self).__init__(msg)
        ## Message reported by the LP solver, if any
        ## (Type: str or None)
        self.solver_message = solver_message


class DegenerateStateError(QKDError, ArithmeticError):
    """
    A two-way step has zero survival probability.
    """
    pass


class ConfigError(ParameterError):
    """
    A scenario configuration could not be parsed or validated.
    """

    def __init__(self, msg, lineno=None):
        if lineno is not None:
            msg = 'line {}: {}'.format(lineno, msg)
        super(ConfigError, self).__init__(msg)
        ## Line number in the configuration text (1-based), if known
        ## (Type: int or None)
        self.lineno = lineno
