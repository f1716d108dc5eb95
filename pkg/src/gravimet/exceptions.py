"""Exception hierarchy. Each family maps onto one CLI exit code."""


class GravimetError(Exception):
    exit_code = 1


class ConfigError(GravimetError):
    exit_code = 2


class DataError(GravimetError):
    exit_code = 3


class JoinError(DataError):
    """A retained county-year has no matching row in a joined table."""

    def __init__(self, table, key):
        self.table = table
        self.key = key
        super().__init__(f"no {table} row for county-year {key!r}")


class InvalidInputError(DataError, ValueError):
    pass


class EstimationError(GravimetError):
    exit_code = 4


class RankDeficiencyError(EstimationError):
    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(f"design is rank deficient; dependent columns: {', '.join(self.columns)}")


class ZeroWithinVariationError(EstimationError):
    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(
            f"no within-pair variation in: {', '.join(self.columns)} (absorbed by pair effects)"
        )


class NumericalInconsistencyError(EstimationError):
    pass


class DegenerateStatisticError(EstimationError, ValueError):
    pass
