"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to distinct process exit statuses without a lookup table of its own.
"""


class DegenHorizonError(Exception):
    exit_code = 1


class NonZeroMean(DegenHorizonError):
    exit_code = 10


class NonPositiveArea(DegenHorizonError):
    exit_code = 11


class EigensolverFailure(DegenHorizonError):
    exit_code = 12


class ZeroNorm(DegenHorizonError):
    exit_code = 13


class NegativeInteriorEigenvalue(DegenHorizonError):
    exit_code = 14


class StepSizeUnderflow(DegenHorizonError):
    exit_code = 15


class LostPositivity(DegenHorizonError):
    exit_code = 16


class SingularMetric(DegenHorizonError):
    exit_code = 17


class MissingDerivatives(DegenHorizonError):
    exit_code = 18


class SearchExhausted(DegenHorizonError):
    exit_code = 19


class NotRotationallySymmetric(DegenHorizonError):
    exit_code = 20


class BridgeInfeasible(DegenHorizonError):
    exit_code = 21


class VerificationFailure(DegenHorizonError):
    exit_code = 22

    def __init__(self, clause, message=""):
        self.clause = clause
        super().__init__(f"clause {clause} failed: {message}" if message else f"clause {clause} failed")


class NoPositivePoint(DegenHorizonError):
    exit_code = 23


class MaxDepthExceeded(DegenHorizonError):
    exit_code = 24


class NoSignChange(DegenHorizonError):
    exit_code = 25
