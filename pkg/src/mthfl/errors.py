"""Exception types raised across the simulator."""

from __future__ import annotations


class MTHFLError(Exception):
    """Base class for all simulator errors."""


class ConfigError(MTHFLError):
    pass


class CoverageError(MTHFLError):
    """Raised when some clients fall outside every aggregator's coverage disk."""

    def __init__(self, client_ids):
        self.client_ids = list(client_ids)
        shown = ", ".join(str(c) for c in self.client_ids[:20])
        more = "" if len(self.client_ids) <= 20 else f" (+{len(self.client_ids) - 20} more)"
        super().__init__(f"clients not covered by any aggregator: {shown}{more}")


class PartitionError(MTHFLError):
    pass


class FormatError(MTHFLError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class LabelRangeError(FormatError):
    pass


class DimensionError(MTHFLError):
    pass


class EmptyAggregateError(MTHFLError):
    pass


class ParseError(MTHFLError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ValidationError(MTHFLError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SchemaError(MTHFLError):
    pass
