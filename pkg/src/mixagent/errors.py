"""Exception hierarchy. The CLI maps the three families to exit codes 2, 3 and 4."""


class MixAgentError(Exception):
    exit_code = 1


class ConfigError(MixAgentError, ValueError):
    exit_code = 2


class DataError(MixAgentError, ValueError):
    exit_code = 3


class NumericError(MixAgentError, ArithmeticError):
    exit_code = 4


# configuration / descriptors
class SpecInvalid(ConfigError):
    pass


class DescriptorInvalid(ConfigError):
    pass


# simplex and shape checks
class DimensionMismatch(DataError):
    pass


class NegativeWeight(DataError):
    pass


class SumNotOne(DataError):
    pass


class EmptySample(DataError):
    pass


class InvalidEmpirical(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class ContextOverflow(DataError):
    pass


# sampler
class EmptyCandidates(DataError):
    pass


class KTooLarge(DataError):
    pass


# env
class ExhaustedPool(DataError):
    pass


class EmptyEvalSet(DataError):
    pass


class EmptyHistory(DataError):
    pass


# agent / orchestrator
class MissingFeedback(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class EmptyBatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class CheckpointInvalid(DataError):
    pass


class DegenerateDesign(NumericError):
    pass


class EmptyPartition(DataError):
    pass
