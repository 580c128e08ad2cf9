"""Exception hierarchy for parachute.

Every error derives from ``ParachuteError``. Concrete errors also derive from
the closest builtin so callers can catch either one.
"""


class ParachuteError(Exception):
    """Root of all parachute errors."""


class SchemaError(ParachuteError, ValueError):
    """The declared schema violates one of its invariants."""


class SchemaLookupError(ParachuteError, LookupError):
    """A table or column is not part of the schema."""


class IngestError(ParachuteError, ValueError):
    """A CSV file could not be loaded into a table."""


class DuplicateKeyError(ParachuteError, ValueError):
    """A key column holds the same key twice in strict mode."""

    def __init__(self, table: str, column: str, key):
        super().__init__(f"duplicate key {key!r} in {table}.{column}")
        self.table = table
        self.column = column
        self.key = key


class DanglingForeignKeyError(ParachuteError, LookupError):
    """An FK row has no partner on the PK side in strict mode."""

    def __init__(self, fk_table: str, row: int, key, pk_table: str):
        super().__init__(
            f"{fk_table} row {row}: key {key!r} has no partner in {pk_table}"
        )
        self.fk_table = fk_table
        self.row = row
        self.key = key
        self.pk_table = pk_table


class UnknownKeyError(ParachuteError, LookupError):
    """An update names a key that the PK table does not hold."""


class DescriptorError(ParachuteError, ValueError):
    """A parachute descriptor violates its invariants."""


class NullValueError(ParachuteError, ValueError):
    """A NULL reached a place that cannot represent it."""


class NotTranslatable(ParachuteError):
    """A base predicate has no sound translation for a descriptor."""


class UnsupportedPattern(ParachuteError):
    """A regular expression does not denote a small finite language."""


class AttachOrderError(ParachuteError):
    """The FK graph has a cycle, so no attach order exists."""

    def __init__(self, cycle):
        super().__init__("foreign-key cycle: " + " -> ".join(cycle))
        self.cycle = list(cycle)


class PlanError(ParachuteError, ValueError):
    """A query or plan is malformed."""


class CyclicQueryError(ParachuteError):
    """The query graph has no join tree."""


class ExecutionError(ParachuteError):
    """The engine cannot run a query against the loaded data."""


class OracleMismatchError(ParachuteError, ValueError):
    """Metrics and oracle sets belong to different queries."""


class UsageError(ParachuteError, ValueError):
    """The command line could not be parsed."""
