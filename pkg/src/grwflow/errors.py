"""Exception hierarchy shared by all modules."""


class GRWFlowError(Exception):
    """Base class for every error raised by the package."""


class InvalidParametersError(GRWFlowError, ValueError):
    pass


class NotSpacelikeError(GRWFlowError):
    """The graph stopped being space-like (radicand below the guard margin)."""


class NumericalBlowupError(GRWFlowError):
    pass


class AssumptionViolatedError(GRWFlowError):
    pass


class CorruptCheckpointError(GRWFlowError):
    pass


class WrongTopologyError(GRWFlowError, ValueError):
    pass


class MissingDataError(GRWFlowError):
    pass


class ConfigError(GRWFlowError):
    """Invalid run configuration. ``problems`` lists one message per offending key."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
