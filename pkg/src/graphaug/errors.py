"""Exception types shared across the package."""


class GraphAugError(Exception):
    """Base class for package-specific failures."""


class InvalidShapeError(GraphAugError, ValueError):
    """A tensor shape is empty, non-positive, or inconsistent."""


class DatasetError(GraphAugError):
    """Dataset ingestion failed (missing file, dangling index, bad format)."""


class CheckpointError(GraphAugError):
    """Checkpoint file is missing, truncated, or from an incompatible version."""


class TrainingDivergedError(GraphAugError):
    """Loss became NaN/Inf; carries step diagnostics in the message."""


class ConfigError(GraphAugError):
    """Run configuration is invalid; message names the offending field."""
