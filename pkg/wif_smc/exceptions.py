"""Exceptions raised by the wif_smc package.

Every exception carries a stable ``code`` which the command line interface reports in its
structured error output.
"""
from typing import Optional


class WifSmcError(Exception):
    """Base class for all wif_smc errors."""

    code = "WifSmcError"


class AllZeroWeightsError(WifSmcError, ValueError):
    """All unnormalised weights are zero."""

    code = "AllZeroWeights"


class NegativeWeightError(WifSmcError, ValueError):
    """A weight is negative or not finite."""

    code = "NegativeWeight"


class IndexOutOfRangeError(WifSmcError, IndexError):
    """An ancestor index does not address a particle of the cloud."""

    code = "IndexOutOfRange"


class SymmetrisedConditionViolatedError(WifSmcError, ValueError):
    """Symmetrised systematic resampling called with p > 1 and fallback disabled."""

    code = "SymmetrisedConditionViolated"


class TooLargeForEnumerationError(WifSmcError, ValueError):
    """The exact distribution has too many outcomes to enumerate."""

    code = "TooLargeForEnumeration"


class NoIntensityLimitError(WifSmcError, ValueError):
    """The scheme has no closed-form continuous-time resampling intensity."""

    code = "NoIntensityLimit"


class InvalidOrderError(WifSmcError, ValueError):
    """A permutation is not a mean partition of the required vector."""

    code = "InvalidOrder"


class UnsupportedDimensionError(WifSmcError, ValueError):
    """The operation is only available for one-dimensional models."""

    code = "UnsupportedDimension"


class UnsupportedTransitionError(WifSmcError, ValueError):
    """The operation needs a transition with a closed-form Gaussian density."""

    code = "UnsupportedTransition"


class ModelError(WifSmcError, ValueError):
    """The Feynman-Kac model is not valid."""

    code = "ModelError"


class MajorantViolatedError(WifSmcError):
    """The thinning majorant was exceeded by the overall resampling rate."""

    code = "MajorantViolated"


class EmptyEnsembleError(WifSmcError, ValueError):
    """An ensemble estimator was given no paths."""

    code = "EmptyEnsemble"


class ChainTooShortError(WifSmcError, ValueError):
    """A chain is too short for the requested diagnostic."""

    code = "ChainTooShort"


class ResamplingFailureError(WifSmcError):
    """A sampler produced an internally inconsistent outcome."""

    code = "ResamplingFailure"


class DegenerateFilterError(AllZeroWeightsError):
    """All particle weights vanished at some step of the particle filter."""

    code = "DegenerateFilter"

    def __init__(self, step: int, message: Optional[str] = None):
        """Store the step where the filter degenerated.

        :param step: zero-based step index of the potential that vanished
        :param message: optional message
        """
        self.step = step
        super().__init__(message or f"all weights are zero at step {step}")
