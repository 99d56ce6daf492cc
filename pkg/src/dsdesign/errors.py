"""Exception types raised by the design pipeline.

Every data or numeric failure derives from :class:`DesignError`; the CLI
reports the concrete class name and exits with status 2.
"""


class DesignError(Exception):
    """Base class for all data and numeric errors."""


# matrix_core
class NotPositiveDefinite(DesignError):
    pass


class RankCollapse(DesignError):
    pass


class DegenerateCentering(DesignError):
    pass


# dataset
class EmptyInput(DesignError):
    pass


class DuplicateRowId(DesignError):
    pass


class NoCovariateColumns(DesignError):
    pass


class ConstantColumn(DesignError):
    pass


class NonPositiveDefiniteCorrelation(DesignError):
    pass


# design_model
class UnknownId(DesignError):
    pass


class UnstandardizedTable(DesignError):
    pass


class SingularInformation(DesignError):
    pass


class SampleTooSmall(DesignError):
    pass


class SingularScatter(DesignError):
    pass


class DegenerateSelection(DesignError):
    pass


# stage 1
class SingularInitialScatter(DesignError):
    pass


class AllCandidatesCollapseRank(DesignError):
    pass


class TargetTooLarge(DesignError):
    pass


class InvalidConfig(DesignError):
    pass


# stage 2 / evaluation
class OddSelectionSize(DesignError):
    pass


class SampleTooLarge(DesignError):
    pass
