"""Exception types shared across the package."""


class PromptClrError(Exception):
    """Base class for all package-specific errors."""


class ParseError(PromptClrError):
    """A dataset/template/verbalizer/lexicon file line could not be parsed."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class InsufficientDataError(PromptClrError):
    """A class does not have enough examples for the requested split."""


class ConfigurationError(PromptClrError):
    """An invalid model/task/run configuration."""


class RenderError(PromptClrError):
    """Template placeholders do not match the example being rendered."""


class AssemblyError(PromptClrError):
    """The demonstration set handed to prompt assembly is invalid."""


class AugmentationError(PromptClrError):
    """Not enough distinct material to build the requested view."""


class ExtractionError(PromptClrError):
    """A representation was requested at a position that does not exist."""


class SequenceLengthError(PromptClrError):
    """An input sequence exceeds the model's maximum length."""


class DivergenceError(PromptClrError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step
