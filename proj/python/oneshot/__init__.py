"""Single-scan LiDAR global localization."""

from ._core import (
    ConfigError,
    DataError,
    DegenerateError,
    Error,
    FormatError,
    Localizer,
    PipelineConfig,
    SegmentMap,
    align_points,
    build_map,
    describe,
    generate_world,
    load_config,
    load_embeddings,
    load_map,
    max_clique,
    parse_config,
    pr_sweep,
    read_scan,
    save_embeddings,
    segment_scan,
    simulate_scan,
    voxelize,
    wakeup_distances,
    write_scan,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateError",
    "Error",
    "FormatError",
    "Localizer",
    "PipelineConfig",
    "SegmentMap",
    "align_points",
    "build_map",
    "describe",
    "generate_world",
    "load_config",
    "load_embeddings",
    "load_map",
    "max_clique",
    "parse_config",
    "pr_sweep",
    "read_scan",
    "save_embeddings",
    "segment_scan",
    "simulate_scan",
    "voxelize",
    "wakeup_distances",
    "write_scan",
]
