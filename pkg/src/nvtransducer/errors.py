class TransducerError(Exception):
    """Base class for errors raised by nvtransducer."""


class InvalidParameterError(TransducerError, ValueError):
    pass


class SolverError(TransducerError, RuntimeError):
    pass


class OracleTimeoutError(SolverError):
    """The time-domain integration had not settled by the end of the horizon."""


class SaturationError(TransducerError, RuntimeError):
    """Signal regression grid is outside the linear-response regime."""


class DegenerateResultError(TransducerError, ValueError):
    pass


class ConfigError(TransducerError, ValueError):
    """A configuration file or override could not be turned into parameters."""
