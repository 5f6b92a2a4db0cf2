"""Exception hierarchy shared by all fieldsim modules."""


class FieldSimError(Exception):
    """Base class for every error raised by fieldsim."""

    def __str__(self):
        # KeyError subclasses would otherwise repr() their message
        return str(self.args[0]) if len(self.args) == 1 else super().__str__()


class ParseError(FieldSimError, ValueError):
    """Malformed text input (unit expression, DSL source, config file)."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class DslSyntaxError(ParseError):
    pass


class ArityError(ParseError):
    pass


class UnknownUnit(FieldSimError, KeyError):
    pass


class DimensionMismatch(FieldSimError, ValueError):
    pass


class UnitMismatch(DimensionMismatch):
    pass


class DivisionByZero(FieldSimError, ZeroDivisionError):
    pass


class DuplicateName(FieldSimError, KeyError):
    pass


class ShapeMismatch(FieldSimError, ValueError):
    pass


class MeshMismatch(FieldSimError, ValueError):
    pass


class AliasedOutput(FieldSimError, ValueError):
    pass


class UnusedFreeIndex(FieldSimError, ValueError):
    pass


class RankError(FieldSimError, ValueError):
    """A field reference or target uses more indices than rank <= 1 allows."""


class UnknownConstant(FieldSimError, KeyError):
    pass


class UnknownField(FieldSimError, KeyError):
    pass


class ComponentOutOfRange(FieldSimError, ValueError):
    pass


class CycleDetected(FieldSimError, ValueError):
    def __init__(self, path):
        self.path = list(path)
        super().__init__("dependency cycle: " + "→".join(self.path))


class DuplicateOutputRule(FieldSimError, ValueError):
    pass


class WriteToDerivedField(FieldSimError, ValueError):
    pass


class StepSizeUnderflow(FieldSimError, ArithmeticError):
    pass


class NonFiniteRhs(FieldSimError, ArithmeticError):
    pass


class UnknownKey(FieldSimError, KeyError):
    pass
