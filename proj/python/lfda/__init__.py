"""Bayesian longitudinal functional data analysis: simulation, fitting and summaries."""

from ._core import (
    ArgumentError,
    BasisConfig,
    ChainConfig,
    ChainError,
    Dataset,
    DomainError,
    DatasetMismatchError,
    Draws,
    FormatError,
    Hyperparameters,
    IoError,
    ScenarioSpec,
    VersionError,
    build_basis,
    criteria,
    default_s_basis,
    default_t_basis,
    draws_from_bytes,
    fit,
    load_dataset,
    load_draws,
    relative_error,
    save_dataset,
    simulate,
    simultaneous_band,
    summarize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
