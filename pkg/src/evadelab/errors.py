"""Exception types shared across the package."""


class EvadeLabError(Exception):
    """Base class for all package-specific errors."""


class MalformedInputError(EvadeLabError, ValueError):
    """A feature file or other external document violates its grammar."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class UndefinedMetricError(EvadeLabError, ValueError):
    """A metric is requested for a population on which it is undefined."""


class TrainingDivergedError(EvadeLabError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class StaleIndexError(EvadeLabError, RuntimeError):
    """A retrieval index was built by a different embedding provider."""


class BackendUnavailableError(EvadeLabError, RuntimeError):
    """A text-generation backend could not be reached after retries."""


class PromptTooLargeError(EvadeLabError, ValueError):
    """A prompt exceeds the backend's context budget."""


class UnparseableResponseError(EvadeLabError, ValueError):
    """A backend response contained no extractable structure."""


class EmptyPopulationError(EvadeLabError, RuntimeError):
    """No true-positive samples are available to attack."""


class ConfigError(EvadeLabError, ValueError):
    """Run configuration failed validation; carries every violation found."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = list(problems)
