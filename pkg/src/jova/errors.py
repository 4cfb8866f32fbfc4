"""Exception hierarchy shared by every jova module."""


class JovaError(Exception):
    """Base class for all errors raised by this package."""


# --- SMILES parsing -------------------------------------------------------

class SmilesError(JovaError, ValueError):
    """A SMILES string could not be turned into a molecular graph."""

    def __init__(self, message, smiles=None, position=None):
        self.smiles = smiles
        self.position = position
        if smiles is not None and position is not None:
            message = f"{message} (at position {position} in {smiles!r})"
        super().__init__(message)


class UnbalancedRing(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class UnknownAtom(SmilesError):
    pass


class ValenceError(SmilesError):
    pass


# --- featurization ----------------------------------------------------------

class FeaturizationError(JovaError, ValueError):
    pass


class InvalidResidue(FeaturizationError):
    pass


class SequenceTooShort(FeaturizationError):
    pass


# --- tensors and training ---------------------------------------------------

class ShapeMismatch(JovaError, ValueError):
    pass


class NumericalOverflow(JovaError, ArithmeticError):
    """A loss or gradient became NaN or infinite."""


class FormatError(JovaError, ValueError):
    """A checkpoint, feature cache or manifest file is malformed."""


# --- data ingestion and splitting ------------------------------------------

class DataError(JovaError, ValueError):
    pass


class MalformedRow(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicatePair(DataError):
    pass


class EmptyAfterFilter(DataError):
    pass


class InfeasibleSplit(DataError):
    """The requested split scheme cannot be satisfied by the dataset."""

    def __init__(self, message, offending=()):
        self.offending = tuple(offending)
        super().__init__(message)


class InfeasibleWarmSplit(InfeasibleSplit):
    pass


# --- metrics ----------------------------------------------------------------

class MetricError(JovaError, ValueError):
    pass


class EmptyInput(MetricError):
    pass


class NoComparablePairs(MetricError):
    pass


class ZeroVariance(MetricError):
    pass
