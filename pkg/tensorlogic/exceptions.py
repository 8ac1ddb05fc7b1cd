from typing import Any, Optional, Sequence


class TensorLogicException(Exception):
    pass


class ValidationError(TensorLogicException):
    """Raised when user input (files, flags, configs, rules) is invalid"""
    pass


class ConfigError(ValidationError):
    pass


class ParameterValidationError(ValidationError):
    """Exception raised when parameter validation fails"""
    pass


class ParameterConversionError(ValidationError):
    """Exception raised when parameter conversion fails"""
    pass


class ShapeError(ValidationError):
    pass


class DatasetFormatError(ValidationError):
    pass


class SchemaError(DatasetFormatError):
    pass


class SelfLoopError(DatasetFormatError):
    pass


class CheckpointFormatError(ValidationError):
    pass


class VocabularyMismatchError(ValidationError):
    pass


class UnknownNameError(ValidationError, KeyError):
    def __init__(self, kind: str, name: str, suggestions: Sequence[str] = ()):
        self.kind = kind
        self.name = name
        self.suggestions = list(suggestions)
        message = f"Unknown {kind} '{name}'"
        if self.suggestions:
            message += f" (did you mean: {', '.join(self.suggestions)}?)"
        super().__init__(message)

    def __str__(self) -> str:
        return str(self.args[0])


class RuleSyntaxError(ValidationError):
    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        pointer = " " * position + "^"
        super().__init__(f"{message} at position {position}\n  {text}\n  {pointer}")


class UnsupportedArityError(ValidationError):
    pass


class UnboundVariableError(ValidationError):
    pass


class UnsupportedPatternError(ValidationError):
    pass


class UnknownPredicateError(ValidationError):
    pass


class NonFiniteError(TensorLogicException):
    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message)


class DivergenceError(TensorLogicException):
    def __init__(self, message: str, epoch: int):
        self.epoch = epoch
        super().__init__(message)


class FixpointDivergenceError(TensorLogicException):
    def __init__(self, message: str, trace: Any):
        self.trace = trace
        super().__init__(message)


class InsufficientPathsError(TensorLogicException):
    pass


class GradientCheckError(TensorLogicException):
    pass


class ExperimentStageError(TensorLogicException):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class AmbiguousNameError(ValidationError):
    def __init__(self, kind: str, name: str, candidates: Sequence[str]):
        self.kind = kind
        self.name = name
        self.candidates = list(candidates)
        super().__init__(f"{kind.capitalize()} '{name}' is ambiguous; candidates: {', '.join(self.candidates)}")
