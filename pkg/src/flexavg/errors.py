"""Exception hierarchy shared by all modules."""


class FlexavgError(Exception):
    """Base class; ``code`` is the machine-readable tag the CLI prints."""

    code = "error"


class Infeasible(FlexavgError):
    code = "infeasible"


class Unbounded(FlexavgError):
    code = "unbounded"


class CycleGuardTripped(FlexavgError):
    code = "cycle_guard"


class NotConverged(FlexavgError):
    code = "not_converged"


class RankDeficient(FlexavgError):
    code = "rank_deficient"

    def __init__(self, message, model=None, fold=None):
        super().__init__(message)
        self.model = model
        self.fold = fold


class ParseError(FlexavgError):
    code = "parse_error"

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(ParseError):
    code = "missing_column"


class NonNumericCell(ParseError):
    code = "non_numeric_cell"


class ConfigError(FlexavgError):
    code = "config_error"
