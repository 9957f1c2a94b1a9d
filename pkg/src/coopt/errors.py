"""Exception hierarchy shared by all coopt modules."""


class CoopError(ValueError):
    """Base class for every error raised by coopt."""


# energy model
class DimensionMismatch(CoopError):
    pass


class SelfLoop(CoopError):
    pass


class NonFiniteEnergy(CoopError):
    pass


class LabelOutOfRange(CoopError):
    pass


class IndexOutOfRange(CoopError):
    pass


class Disconnected(CoopError):
    pass


# decomposition
class EdgeUncovered(CoopError):
    pass


class NotSpanning(CoopError):
    pass


class HasCycle(CoopError):
    pass


class NotAGrid(CoopError):
    pass


class CoefficientSumMismatch(CoopError):
    pass


class EnergySumMismatch(CoopError):
    pass


# propagation
class IsolatedNode(CoopError):
    pass


class NegativeEntry(CoopError):
    pass


class ColumnSumOff(CoopError):
    pass


class Reducible(CoopError):
    pass


# solver
class LambdaOutOfRange(CoopError):
    pass


class NotATree(CoopError):
    pass


class ConfigInvalid(CoopError):
    pass


class ConsensusNotStable(CoopError):
    pass


# oracle
class TooLarge(CoopError):
    pass


# stereo / image io
class MalformedHeader(CoopError):
    pass


class TruncatedData(CoopError):
    pass


class SizeMismatch(CoopError):
    pass


class DisparityTooLarge(CoopError):
    pass
