"""Python bindings for the deepheart C++ core."""

from ._deepheart import (
    DataError,
    NumericError,
    UsageError,
    __version__,
    bootstrap_ci,
    c_statistic,
    default_tasks,
    dt_transform,
    feature_names,
    generate_cohort,
    grid_size,
    model_output_shape,
    parameter_count,
    rmssd,
    roc_curve,
    run_cli,
)

__all__ = [
    "DataError",
    "NumericError",
    "UsageError",
    "__version__",
    "bootstrap_ci",
    "c_statistic",
    "default_tasks",
    "dt_transform",
    "feature_names",
    "generate_cohort",
    "grid_size",
    "model_output_shape",
    "parameter_count",
    "rmssd",
    "roc_curve",
    "run_cli",
]
