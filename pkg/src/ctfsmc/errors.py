"""Exception hierarchy."""


class CtfError(Exception):
    """Base class for all errors raised by this package."""


class PrefixMismatch(CtfError):
    pass


class EmptySupport(CtfError):
    pass


class NegativeWeight(CtfError):
    pass


class DuplicateValue(CtfError):
    pass


class UnknownSupport(CtfError):
    pass


class NonTerminating(CtfError):
    """Enumeration exceeded its execution budget."""


class AllZeroWeights(CtfError):
    pass


class CoarsenFailure(CtfError):
    pass


class EmptyRefinement(CtfError):
    pass


class AllZeroScores(CtfError):
    """Every refinement of a stored coarse value has zero mass."""


class NegativeLevel(CtfError):
    pass


class UnregisteredConstruct(CtfError):
    """A raw sample/factor ran at a coarse level without being lifted."""


class UnresolvedLattice(CtfError):
    pass


class FullyCoarsened(CtfError):
    pass


class DimensionMismatch(CtfError):
    pass


class NonDyadicM(CtfError):
    pass


class ObservationOutOfRange(CtfError):
    pass


class EmptyTraces(CtfError):
    pass


class GridMismatch(CtfError):
    pass


class ConfigError(CtfError):
    pass
