"""Exception types raised across the package."""


class LakeflowError(Exception):
    """Base class for every error raised by lakeflow."""


# metadata

class FileMissing(LakeflowError, FileNotFoundError):
    pass


class ParseError(LakeflowError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(LakeflowError):
    def __init__(self, index: int, rule: str):
        super().__init__(f"entry {index}: {rule}")
        self.index = index
        self.rule = rule


class UnknownCredentialsRef(LakeflowError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


# sources

class SourceError(LakeflowError):
    pass


class SourceUnavailable(SourceError):
    pass


class AuthFailure(SourceError):
    pass


class ReadError(SourceError):
    pass


class SchemaMismatch(SourceError):
    pass


class UnsupportedCapability(SourceError):
    pass


class UnknownColumn(LakeflowError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


# lake

class LakeError(LakeflowError):
    pass


class ConcurrentWriter(LakeError):
    pass


class SchemaDrift(LakeError):
    pass


class TableMissing(LakeError):
    pass


class CorruptLog(LakeError):
    pass


# cdc

class NullPrimaryKey(LakeflowError):
    def __init__(self, row_index: int):
        super().__init__(f"null primary key cell in row {row_index}")
        self.row_index = row_index


class DuplicateKeyInPrevious(LakeflowError):
    def __init__(self, key: tuple):
        super().__init__(f"duplicate key in previous snapshot: {key!r}")
        self.key = key


# engine

class UnsatisfiableIngestion(LakeflowError):
    def __init__(self, entry, reason: str):
        super().__init__(f"{entry.source_name}/{entry.table_name}: {reason}")
        self.entry = entry
        self.reason = reason


class PipelineError(LakeflowError):
    pass
