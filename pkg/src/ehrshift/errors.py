"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, criteria, mapping or run configuration."""


class SchemaError(ValueError):
    """A delimited input file does not match its schema."""

    def __init__(self, path, line, column, message):
        self.path = str(path)
        self.line = line
        self.column = column
        where = f"{self.path}, line {line}" if line is not None else self.path
        if column is not None:
            where += f", column {column!r}"
        super().__init__(f"{where}: {message}")


class DegenerateLabelError(ValueError):
    """Training labels contain a single class."""


class UndefinedMetricError(ValueError):
    """A rank metric was requested for single-class labels."""


class StratificationError(ValueError):
    """Examples cannot be split into stratified folds."""


class EmptySplitError(ValueError):
    """A training regime produced an empty train or test set."""

    def __init__(self, year, side):
        self.year = year
        self.side = side
        super().__init__(f"empty {side} set for test year {year}")


class DimensionMismatchError(ValueError):
    """Feature length does not match the fitted model."""
