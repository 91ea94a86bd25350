"""EDAS 例外類別，皆繼承 ValueError"""
from typing import Optional


class EdasError(ValueError):
    pass


class EmptyGroup(EdasError):
    pass


class NonFiniteAdvantage(EdasError):
    pass


class MixedPayloadDomain(EdasError):
    pass


class DomainMismatch(EdasError):
    pass


class InconsistentRecord(EdasError):
    pass


class EmptyIncorrectSet(EdasError):
    pass


class InvalidK(EdasError):
    pass


class NoErrors(EdasError):
    pass


class MissingCounterpart(EdasError):
    def __init__(self, problem_ids):
        self.problem_ids = sorted(str(p) for p in problem_ids)
        super().__init__(f"快照無法配對的題目: {', '.join(self.problem_ids)}")


class InconsistentGroup(EdasError):
    pass


class ParseError(EdasError):
    def __init__(self, line_no: int, message: str, source: Optional[str] = None):
        self.line_no = line_no
        self.source = source
        where = f"{source}:{line_no}" if source else f"line {line_no}"
        super().__init__(f"{where}: {message}")
