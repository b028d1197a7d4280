"""Exception hierarchy shared across the pipeline."""


class PatchEmbedError(Exception):
    """Base class for all package errors."""


class ConfigError(PatchEmbedError):
    """Invalid configuration value; message names the offending field."""


class DataError(PatchEmbedError):
    """Missing or malformed input data (manifests, images, label maps)."""


class CheckpointError(DataError):
    """Unreadable, truncated, or inconsistent checkpoint file."""


class SamplingError(PatchEmbedError):
    """Patch/swatch sampling could not satisfy its geometric contract."""


class SamplingBudgetError(SamplingError):
    """Retryable: rejection-sampling budget exhausted on a feasible image."""


class NumericError(PatchEmbedError):
    """Non-finite values or divergence during optimization."""
