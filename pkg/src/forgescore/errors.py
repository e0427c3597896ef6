"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: usage errors exit 1, DataError 2,
NumericError 3.
"""


class PipelineError(Exception):
    """Base class for all forgescore errors."""


class DataError(PipelineError):
    """Bad or missing input data: malformed files, dangling paths, shape
    mismatches between artifacts."""


class NumericError(PipelineError):
    """Numeric failure (NaN/Inf) during training or scoring."""
