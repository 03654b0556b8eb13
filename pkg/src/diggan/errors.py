"""Exception types raised across the package."""


class DigganError(Exception):
    """Base class for all package errors."""


class MissingDirectoryError(DigganError):
    """A silhouette or dataset directory does not exist."""


class EmptySequenceError(DigganError):
    """A silhouette directory contains no frame files."""


class FrameDimensionError(DigganError):
    """Frames within one sequence do not share dimensions."""


class EmptySilhouetteError(DigganError):
    """A sequence has no foreground pixels, so no GEI can be built."""


class PgmFormatError(DigganError):
    """A PGM file is malformed or not binary 8-bit P5."""


class DatasetLayoutError(DigganError):
    """A dataset root has neither a manifest nor the documented layout."""


class EmptyDatasetError(DigganError):
    """A dataset root was scanned but yielded no samples."""


class SamplingError(DigganError):
    """A batch sampler cannot satisfy its contract on this dataset."""


class ShapeError(DigganError):
    """A tensor argument has the wrong dimensions."""


class LossDomainError(DigganError):
    """A loss input lies outside its mathematical domain."""


class NonFiniteLossError(DigganError):
    """A training loss became NaN or infinite."""


class StageOrderError(DigganError):
    """A training stage was started from a checkpoint of the wrong stage."""


class ArchitectureMismatchError(DigganError):
    """A checkpoint's architecture is incompatible with the requested use."""


class CorruptCheckpointError(DigganError):
    """A checkpoint file is truncated or structurally damaged."""


class CheckpointVersionError(DigganError):
    """A checkpoint carries an unrecognized magic or format version."""


class ConfigError(DigganError):
    """A config file or value could not be parsed."""


class EmptyGalleryError(DigganError):
    """An identification query was run against an empty gallery."""


class CoverageError(DigganError):
    """Strict evaluation found (subject, view) cells missing from a role."""


class UnknownViewError(DigganError):
    """A generation target view is not part of the declared view set."""
