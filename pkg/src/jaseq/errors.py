"""Exception types shared across the package."""


class JaseqError(Exception):
    """Base class for all package errors."""


class ParseError(JaseqError):
    """A corpus line could not be parsed.

    Carries the 1-based line number when known so callers can point at the
    offending record.
    """

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class AnnotationRequired(JaseqError):
    """An operation needed bunsetsu spans but the sentence has none."""


class ConfigError(JaseqError):
    """Invalid configuration value (vocabulary size, weights, language code...)."""


class VocabMismatch(JaseqError):
    """Model checkpoint and tokenizer vocabulary do not agree."""


class TrainingDiverged(JaseqError):
    """Training loss became NaN or infinite."""
