"""
한줌 실험 설정
- JSON 실험 설정 → RunConfig (검증 포함)
- 정규화된 설정 echo + sha256 해시 메타데이터
"""
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy

from config import (
    APP_VERSION,
    BUILDERS,
    DEFAULT_HORIZONS,
    DEFAULT_PARTICLE_COUNTS,
    DEFAULT_POMCP_ROLLOUTS,
    DEFAULT_SCHEDULE,
    DEFAULT_SEEDS,
    EXPERIMENTS,
    OUTPUT_DIR,
    PLAN_TIME_BUDGET,
    STUDY_FRACTIONS,
)
from data import resolve_world
from .beacon_world import BeaconWorldConfig, ModelError, world_summary
from .belief import SimplificationLevelError, SimplificationSchedule


class ConfigError(ValueError):
    """실험 설정 오류"""


@dataclass(frozen=True)
class RunConfig:
    """실험 1회 설정"""
    experiment: str
    worlds: Tuple[BeaconWorldConfig, ...]
    builders: Tuple[str, ...] = BUILDERS
    schedule: Tuple[float, ...] = DEFAULT_SCHEDULE
    particle_counts: Tuple[int, ...] = DEFAULT_PARTICLE_COUNTS
    horizons: Dict[str, Tuple[int, ...]] = field(default_factory=lambda: dict(DEFAULT_HORIZONS))
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    output_dir: str = OUTPUT_DIR
    time_budget: float = PLAN_TIME_BUDGET
    rollouts: int = DEFAULT_POMCP_ROLLOUTS
    steps: int = 20
    study_fractions: Tuple[float, ...] = STUDY_FRACTIONS
    lipschitz: Optional[float] = None
    verify_exact: bool = False
    lazy_rewards: bool = False

    @property
    def simplification(self) -> SimplificationSchedule:
        return SimplificationSchedule(self.schedule)

    @property
    def world(self) -> BeaconWorldConfig:
        return self.worlds[0]

    def seeds_with_offset(self, offset: int) -> Tuple[int, ...]:
        return tuple(seed + offset for seed in self.seeds)

    def horizons_for(self, builder: str) -> Tuple[int, ...]:
        return self.horizons.get(builder, DEFAULT_HORIZONS.get(builder, (1,)))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        return parse_config(data)

    def to_dict(self) -> Dict[str, Any]:
        """정규화된 설정 echo (다시 읽으면 같은 RunConfig)"""
        return {
            "experiment": self.experiment,
            "worlds": [w.to_dict() for w in self.worlds],
            "builders": list(self.builders),
            "schedule": list(self.schedule),
            "particle_counts": list(self.particle_counts),
            "horizons": {b: list(h) for b, h in sorted(self.horizons.items())},
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "time_budget": self.time_budget,
            "rollouts": self.rollouts,
            "steps": self.steps,
            "study_fractions": list(self.study_fractions),
            "lipschitz": self.lipschitz,
            "verify_exact": self.verify_exact,
            "lazy_rewards": self.lazy_rewards,
        }


_KNOWN_KEYS = set(RunConfig.__dataclass_fields__) | {"world"}


def parse_config(data: Dict[str, Any]) -> RunConfig:
    """dict → RunConfig, 잘못된 값은 ConfigError"""
    if not isinstance(data, dict):
        raise ConfigError("설정 최상위는 JSON 객체여야 합니다")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"알 수 없는 설정 키: {sorted(unknown)}")
    if "experiment" not in data:
        raise ConfigError("experiment 가 필요합니다")

    values = dict(data)
    raw_worlds = values.pop("worlds", None)
    if "world" in values:
        if raw_worlds is not None:
            raise ConfigError("world 와 worlds 를 함께 쓸 수 없습니다")
        raw_worlds = [values.pop("world")]
    if not raw_worlds:
        raise ConfigError("월드 설정이 비어 있습니다")

    try:
        worlds = tuple(BeaconWorldConfig.from_dict(resolve_world(w)) for w in raw_worlds)
    except (ModelError, ValueError, OSError) as e:
        raise ConfigError(f"월드 설정 오류: {e}")

    for key in ("builders", "schedule", "particle_counts", "seeds", "study_fractions"):
        if key in values:
            if not isinstance(values[key], (list, tuple)):
                raise ConfigError(f"{key} 는 목록이어야 합니다")
            values[key] = tuple(values[key])
    if "horizons" in values:
        if not isinstance(values["horizons"], dict):
            raise ConfigError("horizons 는 builder → 목록 객체여야 합니다")
        values["horizons"] = {b: tuple(h) for b, h in values["horizons"].items()}

    try:
        config = RunConfig(worlds=worlds, **values)
    except TypeError as e:
        raise ConfigError(f"설정 오류: {e}")
    validate_config(config)
    return config


def validate_config(config: RunConfig):
    """일관성 검사 - 실패 시 ConfigError"""
    if config.experiment not in EXPERIMENTS:
        raise ConfigError(f"알 수 없는 실험: {config.experiment} (가능: {', '.join(EXPERIMENTS)})")
    for world in config.worlds:
        if not world.actions:
            raise ConfigError(f"{world.name}: 행동 집합이 비어 있습니다")

    try:
        SimplificationSchedule(config.schedule)
    except SimplificationLevelError as e:
        raise ConfigError(f"단순화 스케줄 오류: {e}")

    for name in ("builders", "particle_counts", "seeds"):
        if not getattr(config, name):
            raise ConfigError(f"{name} 목록이 비어 있습니다")
    for builder in config.builders:
        if builder not in BUILDERS:
            raise ConfigError(f"알 수 없는 트리 형태: {builder}")
    for builder, horizons in config.horizons.items():
        if builder not in BUILDERS:
            raise ConfigError(f"horizons 에 알 수 없는 트리 형태: {builder}")
        if not horizons or any(int(h) != h or h < 1 for h in horizons):
            raise ConfigError(f"{builder} horizon 목록이 잘못되었습니다: {horizons}")
    if any(int(n) != n or n < 1 for n in config.particle_counts):
        raise ConfigError(f"파티클 수는 양의 정수여야 합니다: {config.particle_counts}")
    if any(int(s) != s for s in config.seeds):
        raise ConfigError("seed 는 정수로 명시해야 합니다")
    if not config.study_fractions or any(not 0 < f <= 1 for f in config.study_fractions):
        raise ConfigError(f"study_fractions 는 (0, 1] 범위여야 합니다: {config.study_fractions}")
    if config.time_budget <= 0:
        raise ConfigError("time_budget 은 양수여야 합니다")
    if config.rollouts < 1:
        raise ConfigError("rollouts 는 1 이상이어야 합니다")
    if config.steps < 1:
        raise ConfigError("steps 는 1 이상이어야 합니다")
    if config.lipschitz is not None and config.lipschitz < 0:
        raise ConfigError("lipschitz 는 음수일 수 없습니다")
    for name in ("verify_exact", "lazy_rewards"):
        if not isinstance(getattr(config, name), bool):
            raise ConfigError(f"{name} 는 true / false 여야 합니다")

    if config.experiment == "entropy-study":
        for world in config.worlds:
            if not world.trajectory:
                raise ConfigError(f"{world.name}: entropy-study 는 trajectory 가 필요합니다")


def load_config(path: str) -> RunConfig:
    """JSON 파일 → RunConfig"""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"설정 파일이 없습니다: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON 파싱 실패 ({path}): {e}")
    return parse_config(data)


def canonical_json(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config: RunConfig) -> str:
    """정규화 JSON 의 sha256"""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def emit_metadata(
    config: RunConfig,
    out_dir: str,
    seed_offset: int = 0,
    extra: Optional[Dict[str, Any]] = None
) -> str:
    """출력 옆에 <experiment>_metadata.json 작성, 경로 반환"""
    os.makedirs(out_dir, exist_ok=True)
    metadata = {
        "experiment": config.experiment,
        "config_hash": config_hash(config),
        "seed_offset": seed_offset,
        "config": config.to_dict(),
        "worlds": [world_summary(w) for w in config.worlds],
        "versions": {
            "hanjum": APP_VERSION,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
    }
    if extra:
        metadata.update(extra)

    path = os.path.join(out_dir, f"{config.experiment.replace('-', '_')}_metadata.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(metadata, f, ensure_ascii=False, indent=2, sort_keys=True)
    return path
