"""Exception types raised across the package."""


class StrewError(Exception):
    pass


class MissingComponent(StrewError):
    """A reward combiner was asked for a total without a required component."""


class JudgeUnavailable(StrewError):
    """The caption judge could not produce a verdict (after retries)."""


class MalformedJudgeReply(StrewError):
    pass


class SchemaError(StrewError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class IdMismatch(StrewError):
    pass


class EmptyInput(StrewError):
    pass


class NonFiniteGradient(StrewError):
    pass


class BudgetInfeasible(StrewError):
    pass


class ClientError(StrewError):
    def __init__(self, phase, message):
        self.phase = phase
        super().__init__(f"[{phase}] {message}")
