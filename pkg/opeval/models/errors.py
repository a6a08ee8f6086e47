from typing import Iterable, List, Optional


class DomainError(ValueError):
    """Input outside the domain of an operation (bad index, empty data, ...)"""


class DegenerateScoreError(ValueError):
    """A metric whose value no longer depends on the Q-function"""

    def __init__(self, metric: str, message: str, value: Optional[float] = None):
        super().__init__(f"{metric}: {message}")
        self.metric = metric
        self.value = value


class UndefinedCorrelationError(ValueError):
    """Correlation requested over an input with zero variance"""


class ValidationError(ValueError):
    """Collects every problem found in a log, record or config"""

    def __init__(self, messages: Iterable[str]):
        self.messages: List[str] = list(messages)
        super().__init__("; ".join(self.messages))


class ConfigError(ValidationError):
    pass
