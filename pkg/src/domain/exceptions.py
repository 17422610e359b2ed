from typing import Optional


class TrimmedMatchDesignError(Exception):
    """Base error; `category` is the machine-parseable tag reported by the CLI"""

    category = "error"

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(TrimmedMatchDesignError):
    category = "config"


# Panel ingestion. Row numbers count the header as row 1.
class PanelParseError(TrimmedMatchDesignError):
    category = "panel_parse"


class RecordParseError(TrimmedMatchDesignError):
    """Malformed pairs or experiment CSV"""

    category = "record_parse"


class DuplicateRowError(TrimmedMatchDesignError):
    category = "panel_duplicate"


class ContiguityError(TrimmedMatchDesignError):
    category = "panel_contiguity"

    def __init__(self, message: str, row: Optional[int] = None, geo: Optional[str] = None):
        self.geo = geo
        super().__init__(message, row=row)


class NegativeValueError(TrimmedMatchDesignError):
    category = "panel_negative"


class InsufficientDataError(TrimmedMatchDesignError):
    category = "insufficient_data"


class BlockLengthError(TrimmedMatchDesignError):
    category = "block_length"


class UnknownGeoError(TrimmedMatchDesignError):
    category = "unknown_geo"


class MissingSpendError(TrimmedMatchDesignError):
    category = "missing_spend"


# Pairing
class BlockCountMismatchError(TrimmedMatchDesignError):
    category = "block_mismatch"


class PairCountError(TrimmedMatchDesignError):
    category = "pair_count"


class NonFiniteDistanceError(TrimmedMatchDesignError):
    category = "non_finite_distance"


class EnumerationTooLargeError(TrimmedMatchDesignError):
    category = "enumeration_too_large"


# Estimation
class EstimationError(TrimmedMatchDesignError):
    category = "estimation_failure"


class NoSpendSignalError(EstimationError):
    category = "no_spend_signal"


class AllReplicatesFailedError(TrimmedMatchDesignError):
    category = "all_replicates_failed"
