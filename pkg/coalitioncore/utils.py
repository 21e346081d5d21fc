"""
Exception hierarchy and small helpers shared by all modules.
"""

import logging
from functools import wraps
import math
import time


class CoalitionCoreException(Exception):
    """Generic error in coalitioncore"""


class InstanceValidationError(CoalitionCoreException):
    """An instance, allocation or payment vector violates its invariants"""


class ValuationClassError(CoalitionCoreException):
    """A valuation does not belong to the class an operation requires"""


class ScaleGuardError(CoalitionCoreException):
    """An enumeration would exceed the configured size limits"""


class InternalInvariantError(CoalitionCoreException):
    """A proven invariant failed, which indicates a bug or a violated precondition"""


class NotAnEquilibriumError(CoalitionCoreException):
    """A bid profile is not the kind of equilibrium an operation requires"""


def safe_ratio(numerator: float, denominator: float, tol: float) -> float:
    """
    Ratio with the conventions used for stability and conservativeness levels:
    0/0 is 1 and x/0 is infinite for positive x.

    :param numerator: the numerator
    :param denominator: the denominator
    :param tol: absolute tolerance for treating values as zero
    :return: the ratio
    """
    if abs(denominator) <= tol:
        return 1.0 if abs(numerator) <= tol else math.inf
    return numerator / denominator


def timing(f):
    """
    Timing decorator
    slightly adapted from here:
    https://stackoverflow.com/questions/1622943/timeit-versus-timing-decorator#answer-27737385
    """

    @wraps(f)
    def wrap(*args, **kw):
        ts = time.time()
        result = f(*args, **kw)
        te = time.time()
        logging.debug("Timing: %r took: %2.4f sec" % (f.__name__, te - ts))
        return result

    return wrap
