"""
샘플 설정 로더
- 월드 프리셋 (setting_1, setting_2, linear_gaussian)
- 실험 설정 파일 (entropy_study, plan_bench, receding_setting_*)
"""
import json
import os
from typing import Any, Dict, Union

from config import CONFIG_DIR

WORLD_PRESETS = ("setting_1", "setting_2", "linear_gaussian")

EXPERIMENT_FILES = {
    "entropy-study": "entropy_study.json",
    "plan-bench": "plan_bench.json",
    "receding-run": "receding_setting_1.json",
}


def config_path(name: str) -> str:
    """data/configs 안의 파일 경로 (.json 생략 가능)"""
    filename = name if name.endswith(".json") else f"{name}.json"
    return os.path.join(CONFIG_DIR, filename)


def _read_json(path: str) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def load_world_preset(name: str) -> Dict[str, Any]:
    """프리셋 이름 → 월드 설정 dict"""
    if name not in WORLD_PRESETS:
        raise ValueError(f"알 수 없는 월드 프리셋: {name} (가능: {', '.join(WORLD_PRESETS)})")
    return _read_json(config_path(name))


def resolve_world(entry: Union[str, Dict[str, Any]]) -> Dict[str, Any]:
    """"setting_1" / {"preset": "setting_1", ...덮어쓰기} / 전체 dict → 월드 설정 dict"""
    if isinstance(entry, str):
        return load_world_preset(entry)
    if not isinstance(entry, dict):
        raise ValueError(f"월드 설정은 프리셋 이름이나 dict 여야 합니다: {entry!r}")

    overrides = dict(entry)
    preset = overrides.pop("preset", None)
    if preset is None:
        return overrides
    world = load_world_preset(preset)
    world.update(overrides)
    return world


def load_sample_config(experiment: str) -> Dict[str, Any]:
    """실험 이름 → 저장된 샘플 실험 설정 dict"""
    if experiment not in EXPERIMENT_FILES:
        raise ValueError(f"알 수 없는 실험: {experiment}")
    return _read_json(config_path(EXPERIMENT_FILES[experiment]))


if __name__ == "__main__":
    for name in WORLD_PRESETS:
        world = load_world_preset(name)
        print(f"[OK] {name}: start={world['start']} goal={world['goal']} 비콘 {len(world['beacons'])}개")
