class DomainError(ValueError):
    """Argument outside the domain of the function."""


class IterationCapError(RuntimeError):
    """Too many generating-function evaluations requested."""


class PopulationCapError(RuntimeError):
    """A simulated population exceeded the configured cap.

    ``states`` holds the path up to and including the offending step.
    """

    def __init__(self, msg, states=None):
        super().__init__(msg)
        self.states = states


class InfeasibleAtThisK(ValueError):
    def __init__(self, msg, min_k=None):
        super().__init__(msg)
        self.min_k = min_k


class UnsupportedMechanism(ValueError):
    pass


class StepSizeUnderflow(RuntimeError):
    pass


class TimeCapError(RuntimeError):
    pass
