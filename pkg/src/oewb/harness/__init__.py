"""Config-driven experiment harness: datasets, pipelines, reports, CLI."""

from .config import DatasetSpec, ExperimentConfig, ModelSettings, load_config, save_config
from .datasets import (
    SequenceDataset,
    VectorDataset,
    check_disjoint,
    ingest_dataset,
    make_synthetic_din,
    materialize,
)
from .pipeline import (
    DataBundle,
    ExperimentResult,
    SeedResult,
    prepare_data,
    run_experiment,
    run_seed,
    select_lambda,
)
from .presets import PRESET_NAMES, get_preset, preset_2d, preset_density
from .reports import display_percent, render_table, write_reports

__all__ = [
    "DatasetSpec",
    "ExperimentConfig",
    "ModelSettings",
    "load_config",
    "save_config",
    "SequenceDataset",
    "VectorDataset",
    "check_disjoint",
    "ingest_dataset",
    "make_synthetic_din",
    "materialize",
    "DataBundle",
    "ExperimentResult",
    "SeedResult",
    "prepare_data",
    "run_experiment",
    "run_seed",
    "select_lambda",
    "PRESET_NAMES",
    "get_preset",
    "preset_2d",
    "preset_density",
    "display_percent",
    "render_table",
    "write_reports",
]
