from .sample_configs import (
    WORLD_PRESETS, EXPERIMENT_FILES,
    config_path, load_world_preset, resolve_world, load_sample_config
)
