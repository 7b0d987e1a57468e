"""Exception types shared across the toolkit."""


class SpecDiffError(Exception):
    """Base class for all toolkit errors."""


class DegenerateGeometryError(SpecDiffError):
    """Raised when landmarks or regions collapse to nothing usable."""


class EmptyRegionError(SpecDiffError):
    """Raised when a crop box is empty after clamping to the image."""


class ManifestError(SpecDiffError):
    """Raised on malformed or inconsistent manifest input."""

    def __init__(self, message, line=None, pair_id=None):
        ctx = []
        if line is not None:
            ctx.append(f"line {line}")
        if pair_id is not None:
            ctx.append(f"pair {pair_id!r}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)
        self.line = line
        self.pair_id = pair_id


class SplitError(SpecDiffError):
    """Raised when a cross-validation split cannot be built."""


class TrainingError(SpecDiffError):
    """Raised on invalid training input (single class, bad features...)."""


class ModelFormatError(SpecDiffError):
    """Raised when a persisted model file is unreadable or unsupported."""


class DescriptorKindError(SpecDiffError):
    """Raised on a descriptor-kind mismatch between data and model."""


class EvaluationError(SpecDiffError):
    """Raised on invalid evaluation input (e.g. a missing class)."""
