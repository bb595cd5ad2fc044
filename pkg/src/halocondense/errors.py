"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument is outside its valid range."""


class ParseError(ValueError):
    """A text input could not be parsed."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class RangeError(ValueError):
    """An index or class id falls outside the allowed range."""


class ShapeError(ValueError):
    """Array shapes or row counts do not agree."""


class ContractError(ValueError):
    """A precondition on an internal call was violated."""


class AggregationError(LookupError):
    """A neighbor feature required for aggregation is missing."""

    def __init__(self, node):
        super().__init__(f"no halo feature row for remote node {node}")
        self.node = node


class UndefinedMetricError(ValueError):
    """A metric was requested on an empty population."""


class RoutingError(LookupError):
    """A message names a destination that does not exist."""


class ComparabilityError(ValueError):
    """Two run reports come from different experiments."""


class ConsistencyError(RuntimeError):
    """Model replicas drifted apart."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or contradictory."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
