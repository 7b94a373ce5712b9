"""Typed errors raised across the library.

Every invalid input or violated invariant surfaces as one of these, so
callers can distinguish bad data (exit code 2 in the CLI) from internal
failures (exit code 1).
"""


class UnsupsegError(Exception):
    """Base class for all library errors."""


class TensorFormatError(UnsupsegError):
    """Malformed or unsupported feature-tensor file."""


class MaskFormatError(UnsupsegError):
    """Mask/saliency image is not 8-bit single channel, or dimensions clash."""


class ManifestError(UnsupsegError):
    """Malformed manifest line, duplicate id, or missing referenced file."""


class EmptyProposalError(UnsupsegError):
    """Binarized saliency mask contains no foreground pixels."""


class GraphError(UnsupsegError):
    """Affinity graph cannot be built (too few nodes) or is degenerate."""


class EigenSolverError(UnsupsegError):
    """Eigensolver failed to converge; message carries graph statistics."""


class TrainingError(UnsupsegError):
    """Self-training input mismatch (dimensions, all-ignored masks)."""


class ExternalTrainerError(UnsupsegError):
    """External trainer failed: nonzero exit, timeout, bad predictions."""


class EvaluationError(UnsupsegError):
    """Evaluation inputs are inconsistent (shape, labels, matching mode)."""


class ConfigError(UnsupsegError):
    """Run configuration value outside its documented range."""
