"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class SopoolError(Exception):
    exit_code = 1


class ShapeError(SopoolError, ValueError):
    exit_code = 2


class ConfigError(SopoolError, ValueError):
    exit_code = 2


class LabelError(SopoolError, ValueError):
    exit_code = 2


class ContractError(SopoolError, RuntimeError):
    exit_code = 2


class DataError(SopoolError):
    exit_code = 3


class ParseError(DataError):
    pass


class IntegrityError(DataError):
    pass


class StratificationError(DataError):
    pass


class SchemaError(DataError):
    pass


class DivergenceError(SopoolError, ArithmeticError):
    exit_code = 4


class BudgetError(SopoolError):
    exit_code = 2


class ResultNotFoundError(DataError, FileNotFoundError):
    pass
