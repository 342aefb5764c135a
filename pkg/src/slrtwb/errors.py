"""Exception types shared across the package."""


class SlrError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SlrError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class ArityError(ParseError):
    pass


class UndeclaredSymbol(ParseError):
    pass


class DuplicateParameter(ParseError):
    pass


class ArityMismatch(SlrError):
    pass


class NotLocallyDisjoint(SlrError):
    def __init__(self, relation: str, tup: tuple):
        super().__init__(f"shared tuple {relation}{tup} in both structures")
        self.relation = relation
        self.tup = tup


class ElementNotInSupport(SlrError):
    pass


class TooLarge(SlrError):
    pass


class CapExceeded(SlrError):
    pass


class EmptySemantics(SlrError):
    """The root predicate has no models."""


class ColorClash(SlrError):
    def __init__(self, variable: str):
        super().__init__(f"colors clash on shared variable {variable}")
        self.variable = variable


class NoReset(SlrError):
    pass


class AllPersistentAtom(SlrError):
    pass


class InconsistentSplit(SlrError):
    pass


class InternalError(SlrError):
    """An invariant of the pipeline was violated (exit code 3 in the CLI)."""
