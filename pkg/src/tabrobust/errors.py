"""Exception hierarchy.

The CLI maps these onto exit codes: config errors -> 2, capability errors -> 3,
data errors -> 4.
"""


class TabRobustError(Exception):
    exit_code = 1


class ConfigError(TabRobustError):
    exit_code = 2


class CapabilityError(TabRobustError):
    exit_code = 3


class DataError(TabRobustError):
    exit_code = 4


class SchemaError(DataError):
    pass


class DslSyntaxError(SchemaError):
    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        loc = ""
        if line is not None:
            loc = f" at line {line}, column {column}"
        super().__init__(f"{message}{loc}")


class ConstraintTypeError(DslSyntaxError):
    pass


class UnknownFeatureError(SchemaError):
    pass


class DefinitionCycleError(SchemaError):
    pass


class DivisionGuardError(DataError):
    pass


class ArityError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class TraceTooShortError(TabRobustError):
    pass
