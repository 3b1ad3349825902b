"""Gearbox fault diagnosis under changing operating conditions.

Thin wrapper over the C++ core: signal synthesis, windowing, the
domain-generalized encoder, RVFL classifiers and stream replay.
"""

from dgfd._core import (
    FAULTS,
    SAMPLE_RATE_HZ,
    Model,
    Rvfl,
    __version__,
    cross_entropy,
    cumulative_accuracy,
    derive_seed,
    fit_standardizer,
    load_mcc5_csv,
    run_stream,
    rvfl_train,
    segment,
    standardize,
    synth,
    train_dge,
    window_count,
)

__all__ = [
    "FAULTS",
    "SAMPLE_RATE_HZ",
    "Model",
    "Rvfl",
    "__version__",
    "cross_entropy",
    "cumulative_accuracy",
    "derive_seed",
    "fit_standardizer",
    "load_mcc5_csv",
    "run_stream",
    "rvfl_train",
    "segment",
    "standardize",
    "synth",
    "train_dge",
    "window_count",
]
