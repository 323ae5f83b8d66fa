"""Exception hierarchy.

The CLI maps each family to its own exit code, so new errors should
subclass one of ``ConfigError``, ``DataError`` or ``PipelineError``.
"""


class CoinGradeError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(CoinGradeError):
    pass


class DataError(CoinGradeError):
    pass


class PipelineError(CoinGradeError):
    pass


class NoCoinFound(DataError):
    pass


class ImageReadError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, reason, row=None, column=None, offset=None):
        self.reason = reason
        self.row = row
        self.column = column
        self.offset = offset
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        msg = reason if not where else f"{', '.join(where)}: {reason}"
        super().__init__(msg)


class MissingFile(DataError):
    def __init__(self, path, row=None, coin_id=None):
        self.path = path
        self.row = row
        self.coin_id = coin_id
        msg = f"missing file: {path}"
        if coin_id is not None:
            msg = f"coin {coin_id}: {msg}"
        if row is not None:
            msg = f"row {row}: {msg}"
        super().__init__(msg)


class VersionMismatch(DataError):
    pass


class LeakageError(DataError):
    """Raised when a test-split sample reaches a training-only transform."""


class TooFewPoints(PipelineError):
    pass


class DegenerateDistribution(PipelineError):
    pass


class ShapeMismatch(PipelineError):
    pass


class SingleClass(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


class CoinDataError(DataError):
    """A per-coin failure, tagged with the coin it happened on."""

    def __init__(self, coin_id, cause):
        self.coin_id = coin_id
        self.cause = cause
        super().__init__(f"coin {coin_id}: {cause}")
