"""
Error types for the generator.

Every error raised by the library derives from NLGError, which carries
optional context about what was expected and what was found.
"""

from typing import Any, List, Optional


class NLGError(Exception):
    """Base exception with detailed context."""

    def __init__(self, message: str, field: Optional[str] = None, expected: Any = None,
                 actual: Any = None, position: Optional[int] = None,
                 suggestions: Optional[List[str]] = None):
        super().__init__(message)
        self.field = field
        self.expected = expected
        self.actual = actual
        self.position = position
        self.suggestions = suggestions or []

    def __str__(self):
        parts = [str(self.args[0])]
        if self.field:
            parts.append(f"Field: '{self.field}'")
        if self.position is not None:
            parts.append(f"Position: {self.position}")
        if self.expected is not None:
            parts.append(f"Expected: {self.expected}")
        if self.actual is not None:
            parts.append(f"Actual: {self.actual}")
        if self.suggestions:
            parts.append(f"Suggestions: {', '.join(self.suggestions)}")
        return " | ".join(parts)


class ShapeError(NLGError):
    """Tensor shapes do not conform."""


class GradientError(NLGError):
    """Gradient requested for a tensor the tape never saw."""


class DAParseError(NLGError):
    """Malformed dialogue act string."""


class DialogueActError(NLGError):
    """Dialogue act violates its invariants."""


class TreeParseError(NLGError):
    """Bracketed tree could not be recovered."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.diagnostics = diagnostics or []


class VocabularyError(NLGError):
    """Unknown token id or inconsistent vocabulary."""


class CorpusValidationError(NLGError):
    """Corpus record failed validation."""

    def __init__(self, message: str, line: Optional[int] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.line = line

    def __str__(self):
        base = super().__str__()
        return f"{base} | Line: {self.line}" if self.line is not None else base


class ModelFormatError(NLGError):
    """Model file is missing data or has an unsupported format version."""


class TrainingError(NLGError):
    """Training could not produce a model."""


class LexiconError(NLGError):
    """Slot pattern lexicon does not cover the class inventory."""


class EvaluationError(NLGError):
    """Metric inputs are inconsistent."""


class FoldError(NLGError):
    """Cross-validation plan cannot be built."""


class LeakageError(NLGError):
    """Test data was seen during training."""


class GrammarError(NLGError):
    """Synthetic corpus grammar cannot produce the requested corpus."""


class MissingModelError(NLGError):
    """A required model file does not exist."""

    def __init__(self, path: str, command: str):
        super().__init__(
            f"Model file not found: {path}",
            suggestions=[f"Train it first with: {command}"],
        )
        self.path = path
        self.command = command
