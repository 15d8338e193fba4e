"""
한줌 파티클 belief 모듈
- 가중 파티클 belief, 파티클 필터 업데이트, 리샘플링
- 파티클 부분집합 단순화 (simplify / refine)
"""
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from config import DEFAULT_SCHEDULE


class DegenerateBeliefError(ValueError):
    """관측과 맞는 파티클이 하나도 없음"""


class SimplificationLevelError(ValueError):
    """단순화 레벨 범위 오류"""


def make_stream(seed: int, *labels: Union[int, str]) -> np.random.Generator:
    """seed + 라벨로 이름 붙은 난수 스트림 생성 (재현 가능)"""
    keys = [int(seed) & 0xFFFFFFFF]
    for label in labels:
        if isinstance(label, (int, np.integer)) and label >= 0:
            keys.append(int(label))
        else:
            keys.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(keys))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ParticleBelief:
    """가중 파티클 집합 (N x d)"""
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)

        if particles.shape[0] < 1:
            raise ValueError("파티클이 최소 1개 필요합니다")
        if weights.shape[0] != particles.shape[0]:
            raise ValueError(
                f"파티클 수({particles.shape[0]})와 가중치 수({weights.shape[0]})가 다릅니다"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("가중치는 유한한 음이 아닌 값이어야 합니다")

        total = weights.sum()
        if total <= 0:
            raise DegenerateBeliefError("가중치 합이 0입니다")
        if abs(total - 1.0) > 1e-9:
            weights = weights / total

        object.__setattr__(self, "particles", _frozen(particles))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def covariance(self) -> np.ndarray:
        centered = self.particles - self.mean()
        return (centered * self.weights[:, None]).T @ centered

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "ParticleBelief":
        particles = np.atleast_2d(particles)
        n = particles.shape[0]
        return cls(particles, np.full(n, 1.0 / n))

    @classmethod
    def from_gaussian(cls, mean, sigma: float, n: int, rng: np.random.Generator) -> "ParticleBelief":
        """N(mean, I·sigma²) 에서 균등 가중 파티클 생성"""
        mean = np.asarray(mean, dtype=float)
        particles = mean + sigma * rng.standard_normal((n, mean.shape[0]))
        return cls.uniform(particles)


@dataclass(frozen=True)
class SimplificationSchedule:
    """레벨별 N^s / N 비율 (오름차순, 마지막 1.0)"""
    fractions: Tuple[float, ...] = DEFAULT_SCHEDULE

    def __post_init__(self):
        fractions = tuple(float(f) for f in self.fractions)
        if not fractions:
            raise SimplificationLevelError("스케줄이 비어 있습니다")
        if fractions[-1] != 1.0:
            raise SimplificationLevelError(f"스케줄 마지막 값은 1.0이어야 합니다: {fractions[-1]}")
        for lo, hi in zip(fractions, fractions[1:]):
            if not lo < hi:
                raise SimplificationLevelError(f"스케줄은 순증가해야 합니다: {fractions}")
        if fractions[0] <= 0:
            raise SimplificationLevelError("비율은 0보다 커야 합니다")
        object.__setattr__(self, "fractions", fractions)

    @property
    def finest(self) -> int:
        """가장 세밀한 레벨 n"""
        return len(self.fractions) - 1

    def fraction(self, level: int) -> float:
        self.check_level(level)
        return self.fractions[level]

    def particle_count(self, level: int, n: int) -> int:
        """N^s = ceil(f · N)"""
        if level == self.finest:
            return n
        count = math.ceil(self.fraction(level) * n - 1e-9)
        return min(n, max(1, count))

    def check_level(self, level: int):
        if not 0 <= level <= self.finest:
            raise SimplificationLevelError(f"레벨 {level} 이(가) 범위 [0, {self.finest}] 밖입니다")


@dataclass(frozen=True, eq=False)
class SimplifiedView:
    """belief의 파티클 인덱스 부분집합 A^s (복사 없음)"""
    indices: np.ndarray
    level: int
    fraction: float
    # 비복원 가중 추출 순서 (전체 순열) - refine은 이 순서를 이어서 사용
    order: np.ndarray = field(repr=False)

    def __post_init__(self):
        indices = np.sort(np.asarray(self.indices, dtype=np.int64))
        if indices.size and np.any(np.diff(indices) == 0):
            raise SimplificationLevelError("인덱스가 중복되었습니다")
        indices.setflags(write=False)
        order = np.array(self.order, dtype=np.int64)
        order.setflags(write=False)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "order", order)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    def is_full(self, n: int) -> bool:
        return self.size == n


def propagate_and_reweight(
    belief: ParticleBelief,
    action: np.ndarray,
    observation: np.ndarray,
    transition,
    sensor,
    rng: np.random.Generator,
    floor: Optional[float] = None
) -> ParticleBelief:
    """파티클 필터 1단계: x' ~ T(x, a), w' ∝ w · p(z|x')"""
    particles = transition.sample(belief.particles, action, rng)
    log_lik = sensor.log_density(observation, particles)

    with np.errstate(divide="ignore"):
        log_prior = np.log(belief.weights)
    log_w = log_prior + log_lik

    if not np.isfinite(np.max(log_w)):
        if floor is None:
            raise DegenerateBeliefError("관측과 맞는 파티클이 없습니다 (모든 가중치 0)")
        log_w = log_prior + np.maximum(log_lik, math.log(floor))

    weights = np.exp(log_w - logsumexp(log_w))
    return ParticleBelief(particles, weights)


def systematic_resample(belief: ParticleBelief, rng: np.random.Generator) -> ParticleBelief:
    """Systematic 리샘플링 - 균등 가중치 N개"""
    n = belief.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(belief.weights)
    cumulative[-1] = 1.0
    idx = np.searchsorted(cumulative, positions, side="right")
    idx = np.minimum(idx, n - 1)
    return ParticleBelief.uniform(belief.particles[idx])


def effective_sample_size(belief: ParticleBelief) -> float:
    """ESS = 1 / Σ w²"""
    return float(1.0 / np.sum(belief.weights ** 2))


def simplify(
    belief: ParticleBelief,
    schedule: SimplificationSchedule,
    level: int,
    rng: np.random.Generator
) -> SimplifiedView:
    """가중 비복원 추출로 N^s 개 인덱스 선택 (Gumbel top-k)"""
    schedule.check_level(level)
    n = belief.size

    with np.errstate(divide="ignore"):
        keys = np.log(belief.weights) + rng.gumbel(size=n)
    # 가중치 0 인 파티클(-inf)은 항상 맨 뒤
    order = np.argsort(-keys, kind="stable")

    count = schedule.particle_count(level, n)
    return SimplifiedView(
        indices=order[:count],
        level=level,
        fraction=schedule.fraction(level),
        order=order
    )


def refine(
    view: SimplifiedView,
    belief: ParticleBelief,
    schedule: SimplificationSchedule
) -> Tuple[SimplifiedView, np.ndarray]:
    """다음 레벨로 확장: A^{s+1} = A^s ∪ B, 새로 추가된 B 반환"""
    if view.level >= schedule.finest:
        raise SimplificationLevelError("이미 가장 세밀한 레벨입니다")
    if view.order.shape[0] != belief.size:
        raise SimplificationLevelError("view 와 belief 의 파티클 수가 다릅니다")

    level = view.level + 1
    old_count = view.size
    new_count = schedule.particle_count(level, belief.size)
    added = np.sort(view.order[old_count:new_count])

    refined = SimplifiedView(
        indices=view.order[:new_count],
        level=level,
        fraction=schedule.fraction(level),
        order=view.order
    )
    return refined, added


def full_view(belief: ParticleBelief, schedule: SimplificationSchedule) -> SimplifiedView:
    """가장 세밀한 레벨 view (모든 인덱스)"""
    n = belief.size
    order = np.arange(n)
    return SimplifiedView(indices=order, level=schedule.finest, fraction=1.0, order=order)


def view_weights(view: SimplifiedView, belief: ParticleBelief) -> np.ndarray:
    """view 안의 원래 가중치 (재정규화 하지 않음)"""
    return belief.weights[view.indices]


def view_as_belief(view: SimplifiedView, belief: ParticleBelief) -> ParticleBelief:
    """b^s 를 재정규화된 belief 로 내보내기 (LC 보상 경로용)"""
    weights = view_weights(view, belief)
    if weights.sum() <= 0:
        raise DegenerateBeliefError("view 의 가중치 합이 0입니다")
    return ParticleBelief(belief.particles[view.indices], weights / weights.sum())
