"""LSTM fault classifier trained with a quadruplet metric loss for imbalanced data."""

from ._core import (
    ConfigError,
    ContractError,
    Dataset,
    DimensionError,
    IoError,
    Model,
    NumericError,
    ParseError,
    QdmError,
    SamplingError,
    apply_imbalance,
    cwru_label,
    cwru_train_config,
    evaluate,
    experiment_config,
    load_signal,
    load_te_csv,
    make_windows,
    metrics,
    quadruplet_loss,
    run_ablation,
    run_scenario,
    sample_quadruplets,
    scenario_table,
    synthetic_dataset,
    te_train_config,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
