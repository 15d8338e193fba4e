"""
한줌 2D 비콘 월드 모델
- 가우시안 전이 모델 T, 거리 비례 잡음 비콘 관측 모델 O
- 기대 목표 거리 보상, 칼만 필터 기준선, 가우시안 엔트로피
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from .belief import ParticleBelief


# 행동 이름 → 단위 방향
ACTION_DIRECTIONS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "up": (0.0, 1.0),
    "down": (0.0, -1.0),
}


class ModelError(ValueError):
    """모델 / 월드 설정 오류"""


@dataclass
class DensityCounter:
    """밀도 평가 횟수 (전이 쌍, 관측)"""
    transition: int = 0
    observation: int = 0

    @property
    def total(self) -> int:
        return self.transition + self.observation

    def snapshot(self) -> Dict[str, int]:
        return {"transition": self.transition, "observation": self.observation}

    def since(self, before: Dict[str, int]) -> Dict[str, int]:
        """snapshot 이후 증가분"""
        return {
            "transition": self.transition - before["transition"],
            "observation": self.observation - before["observation"],
        }

    def reset(self):
        self.transition = 0
        self.observation = 0


@dataclass(frozen=True)
class GaussianTransitionModel:
    """T = N(x + a, I·σ_T²)"""
    sigma: float
    dim: int = 2

    def __post_init__(self):
        if self.sigma <= 0:
            raise ModelError(f"sigma_T 는 양수여야 합니다: {self.sigma}")

    @property
    def peak(self) -> float:
        """m = sup p(x'|x, a)"""
        return (2.0 * math.pi * self.sigma ** 2) ** (-self.dim / 2.0)

    def sample(self, x: np.ndarray, action: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x + np.asarray(action, dtype=float) + self.sigma * rng.standard_normal(x.shape)

    def log_density(self, x_next: np.ndarray, x: np.ndarray, action: np.ndarray) -> np.ndarray:
        """broadcast 가능한 log p(x'|x, a)"""
        diff = np.asarray(x_next, dtype=float) - np.asarray(x, dtype=float) - np.asarray(action, dtype=float)
        sq = np.sum(diff ** 2, axis=-1)
        return math.log(self.peak) - 0.5 * sq / self.sigma ** 2

    def density(self, x_next: np.ndarray, x: np.ndarray, action: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(x_next, x, action))

    def pairwise_density(self, x_next: np.ndarray, x: np.ndarray, action: np.ndarray) -> np.ndarray:
        """(|I|, |J|) 행렬: p(x'^i | x^j, a)"""
        x_next = np.atleast_2d(x_next)
        x = np.atleast_2d(x)
        return self.density(x_next[:, None, :], x[None, :, :], action)


@dataclass(frozen=True, eq=False)
class BeaconObservationModel:
    """O = N(x - x^b, I·(σ_O·max(r, r_min))²), x^b 는 가장 가까운 비콘"""
    beacons: np.ndarray
    sigma: float
    r_min: float
    dim: int = 2

    def __post_init__(self):
        beacons = np.atleast_2d(np.asarray(self.beacons, dtype=float))
        if beacons.size == 0:
            raise ModelError("비콘이 최소 1개 필요합니다")
        if self.sigma <= 0 or self.r_min <= 0:
            raise ModelError("sigma_O, r_min 은 양수여야 합니다")
        beacons.setflags(write=False)
        object.__setattr__(self, "beacons", beacons)

    @property
    def peak(self) -> float:
        """n = sup p(z|x), r = r_min 에서 달성"""
        return (2.0 * math.pi * (self.sigma * self.r_min) ** 2) ** (-self.dim / 2.0)

    def nearest_beacon(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """가장 가까운 비콘 인덱스와 거리 (동률이면 낮은 인덱스)"""
        x = np.atleast_2d(x)
        dist = np.linalg.norm(x[:, None, :] - self.beacons[None, :, :], axis=-1)
        idx = np.argmin(dist, axis=1)
        return idx, dist[np.arange(x.shape[0]), idx]

    def noise_scale(self, x: np.ndarray) -> np.ndarray:
        _, r = self.nearest_beacon(x)
        return self.sigma * np.maximum(r, self.r_min)

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        single = np.ndim(x) == 1
        x = np.atleast_2d(x)
        idx, r = self.nearest_beacon(x)
        scale = self.sigma * np.maximum(r, self.r_min)
        z = x - self.beacons[idx] + scale[:, None] * rng.standard_normal(x.shape)
        return z[0] if single else z

    def log_density(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        """파티클별 log p(z|x)"""
        single = np.ndim(x) == 1
        x = np.atleast_2d(x)
        idx, r = self.nearest_beacon(x)
        scale = self.sigma * np.maximum(r, self.r_min)
        diff = np.asarray(z, dtype=float) - (x - self.beacons[idx])
        sq = np.sum(diff ** 2, axis=-1)
        log_p = -0.5 * self.dim * np.log(2.0 * math.pi * scale ** 2) - 0.5 * sq / scale ** 2
        return log_p[0] if single else log_p

    def density(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(z, x))


@dataclass(frozen=True)
class BeaconWorldConfig:
    """비콘 월드 설정 (data/configs/*.json 에서 로드)"""
    name: str
    start: Tuple[float, ...]
    goal: Tuple[float, ...]
    beacons: Tuple[Tuple[float, ...], ...]
    sigma_0: float
    sigma_T: float
    sigma_O: float
    r_min: float
    actions: Tuple[str, ...]
    step_length: float
    horizon: int = 1
    n_particles: int = 50
    n_observations: int = 1
    seed: int = 0
    goal_radius: float = 1.0
    max_steps: int = 20
    trajectory: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.horizon < 1:
            raise ModelError(f"horizon 은 1 이상이어야 합니다: {self.horizon}")
        if self.n_particles < 1:
            raise ModelError(f"n_particles 는 1 이상이어야 합니다: {self.n_particles}")
        if not self.actions:
            raise ModelError("행동 집합이 비어 있습니다")
        for name in tuple(self.actions) + tuple(self.trajectory):
            if name not in ACTION_DIRECTIONS:
                raise ModelError(f"알 수 없는 행동: {name}")
        if len(self.start) != len(self.goal):
            raise ModelError("start / goal 차원이 다릅니다")
        if min(self.sigma_0, self.sigma_T, self.sigma_O, self.r_min, self.step_length) <= 0:
            raise ModelError("잡음/거리 파라미터는 양수여야 합니다")

    @property
    def dim(self) -> int:
        return len(self.start)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BeaconWorldConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"알 수 없는 월드 설정 키: {sorted(unknown)}")
        values = dict(data)
        for key in ("start", "goal", "actions", "trajectory"):
            if key in values:
                values[key] = tuple(values[key])
        if "beacons" in values:
            values["beacons"] = tuple(tuple(b) for b in values["beacons"])
        try:
            return cls(**values)
        except TypeError as e:
            raise ModelError(f"월드 설정 오류: {e}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "start": list(self.start),
            "goal": list(self.goal),
            "beacons": [list(b) for b in self.beacons],
            "sigma_0": self.sigma_0,
            "sigma_T": self.sigma_T,
            "sigma_O": self.sigma_O,
            "r_min": self.r_min,
            "actions": list(self.actions),
            "step_length": self.step_length,
            "horizon": self.horizon,
            "n_particles": self.n_particles,
            "n_observations": self.n_observations,
            "seed": self.seed,
            "goal_radius": self.goal_radius,
            "max_steps": self.max_steps,
            "trajectory": list(self.trajectory),
        }

    def replace(self, **changes) -> "BeaconWorldConfig":
        data = self.to_dict()
        data.update(changes)
        return BeaconWorldConfig.from_dict(data)


@dataclass(eq=False)
class WorldModels:
    """전이/관측 모델 + 행동 벡터 + 밀도 평가 카운터 (플래닝 세션 단위)"""
    transition: GaussianTransitionModel
    sensor: BeaconObservationModel
    action_names: Tuple[str, ...]
    action_vectors: np.ndarray
    counter: DensityCounter = field(default_factory=DensityCounter)

    @classmethod
    def from_config(cls, world: BeaconWorldConfig) -> "WorldModels":
        vectors = np.array(
            [np.array(ACTION_DIRECTIONS[name]) * world.step_length for name in world.actions]
        )
        return cls(
            transition=GaussianTransitionModel(world.sigma_T, world.dim),
            sensor=BeaconObservationModel(np.array(world.beacons), world.sigma_O, world.r_min, world.dim),
            action_names=tuple(world.actions),
            action_vectors=vectors,
        )

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def action_vector(self, action: int) -> np.ndarray:
        return self.action_vectors[action]

    def fork(self) -> "WorldModels":
        """같은 모델, 새 카운터"""
        return WorldModels(self.transition, self.sensor, self.action_names, self.action_vectors)


def model_peak_constants(transition: GaussianTransitionModel, sensor: BeaconObservationModel) -> Tuple[float, float]:
    """(m, n): 전이 / 관측 밀도의 최댓값"""
    return transition.peak, sensor.peak


def expected_distance_to_goal(belief: ParticleBelief, goal) -> float:
    """E_b[ ||x - x^t||_1 ]"""
    goal = np.asarray(goal, dtype=float)
    return float(belief.weights @ np.sum(np.abs(belief.particles - goal), axis=1))


def simulate_truth_step(
    x: np.ndarray,
    action: np.ndarray,
    models: WorldModels,
    rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """실제 상태 1단계 진행 + 관측 생성"""
    x_next = models.transition.sample(np.asarray(x, dtype=float), action, rng)
    z = models.sensor.sample(x_next, rng)
    return x_next, z


# ========== 칼만 필터 기준선 ==========

@dataclass(frozen=True, eq=False)
class GaussianState:
    """가우시안 belief (mean, covariance)"""
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ModelError(f"공분산 크기 오류: {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
            raise ModelError("공분산이 대칭이 아닙니다")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ModelError("공분산이 양의 정부호가 아닙니다")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def kalman_prior(world: BeaconWorldConfig) -> GaussianState:
    """b_0 = N(x_0, I·σ_0²)"""
    return GaussianState(np.array(world.start), world.sigma_0 ** 2 * np.eye(world.dim))


def kalman_step(state: GaussianState, action: np.ndarray, z: np.ndarray, models: WorldModels) -> GaussianState:
    """예측 + 업데이트 (관측 잡음은 예측 평균의 거리에서 고정)"""
    d = state.dim
    eye = np.eye(d)

    pred_mean = state.mean + np.asarray(action, dtype=float)
    pred_cov = state.covariance + models.transition.sigma ** 2 * eye

    idx, r = models.sensor.nearest_beacon(pred_mean)
    beacon = models.sensor.beacons[idx[0]]
    noise = models.sensor.sigma * max(float(r[0]), models.sensor.r_min)
    obs_cov = noise ** 2 * eye

    innovation = np.asarray(z, dtype=float) - (pred_mean - beacon)
    s = pred_cov + obs_cov
    gain = np.linalg.solve(s.T, pred_cov.T).T
    mean = pred_mean + gain @ innovation
    # Joseph form - 대칭/양정부호 유지
    a = eye - gain
    cov = a @ pred_cov @ a.T + gain @ obs_cov @ gain.T
    cov = 0.5 * (cov + cov.T)
    return GaussianState(mean, cov)


def gaussian_entropy(state: GaussianState) -> float:
    """0.5 · ln((2πe)^d · det Σ)"""
    sign, logdet = np.linalg.slogdet(state.covariance)
    if sign <= 0:
        raise ModelError("공분산이 양의 정부호가 아닙니다")
    return 0.5 * (state.dim * math.log(2.0 * math.pi * math.e) + logdet)


def world_summary(world: BeaconWorldConfig) -> Dict[str, Any]:
    """메타데이터용 월드 요약"""
    models = WorldModels.from_config(world)
    m, n = model_peak_constants(models.transition, models.sensor)
    return {"world": world.name, "m_peak": m, "n_peak": n, **world.to_dict()}


def goal_reached(x: np.ndarray, world: BeaconWorldConfig) -> bool:
    return float(np.linalg.norm(np.asarray(x) - np.asarray(world.goal))) <= world.goal_radius
