"""Exception hierarchy shared across the toolkit.

Three families matter to callers (and map to distinct CLI exit codes):
bad user input (plain ValueError), malformed files (DumpFormatError and
friends), and computations that cannot produce a result (ComputationError
subclasses).
"""


class LorpError(Exception):
    """Base class for toolkit-specific errors."""


class DumpFormatError(LorpError):
    """Activation dump or matrix file is malformed (magic, truncation, NaN...)."""


class DimensionMismatchError(LorpError):
    """Chunk/accumulator/matrix shapes disagree with the declared header."""


class ComputationError(LorpError):
    """A well-formed request has no defined result."""


class EmptyAccumulatorError(ComputationError):
    """finalize() called before any token was accumulated."""


class LocalityUndefinedError(ComputationError):
    """Off-diagonal similarity mean is not positive, so the locality score has no value."""


class BudgetUnreachableError(ComputationError):
    """Fewer eligible layers exist than the requested pruning budget."""


class InfeasibleTargetError(ComputationError):
    """Requested planted similarity targets have no PSD latent Gram matrix."""
