"""
한줌 미분 엔트로피 추정 / 경계 모듈

연속된 두 파티클 belief (b_k, b_{k+1}) 로 엔트로피를 추정하는 Boers 추정기와,
파티클 부분집합(view)만으로 계산하는 하한/상한.

    H = log[Σ_i p(z|x^i_{k+1}) w^i_k]                                  ... (a)
        - Σ_i w^i_{k+1} log[p(z|x^i_{k+1}) Σ_j p(x^i_{k+1}|x^j_k, a) w^j_k]   ... (b)

(a) 하한: A^s_{k+1} 만 합산, 상한: 빠진 질량에 관측 밀도 최댓값 n 을 곱해 더함.
(b) 하한: A^s_{k+1} 밖의 i 는 안쪽 합을 전이 밀도 최댓값 m 으로 대체,
    상한: 안쪽 합을 A^s_k 로 제한.

캐시(EntropyBoundCache)는 전이 밀도 쌍 (i, j) 를 한 번씩만 계산해 표에 두고
부분합을 들고 있어서 레벨 s → s+1 확장 비용이 |B|·N 에 비례한다.
마지막 레벨에서는 채워진 표로 정확 추정과 같은 순서로 합산한다.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import entr, logsumexp

from config import KDE_BANDWIDTH_FLOOR, LIKELIHOOD_FLOOR
from .beacon_world import WorldModels
from .belief import ParticleBelief, SimplifiedView

logger = logging.getLogger(__name__)

LOG_FLOOR = math.log(LIKELIHOOD_FLOOR)


class BoundInputError(ValueError):
    """경계 계산 입력 오류 (N 불일치, 인덱스 중복 등)"""


@dataclass(frozen=True)
class BoundPair:
    """하한/상한 + 이를 만든 단순화 레벨"""
    lower: float
    upper: float
    level: int = 0

    def __post_init__(self):
        slack = 1e-9 * max(1.0, abs(self.lower), abs(self.upper))
        if self.lower > self.upper + slack:
            raise BoundInputError(f"하한이 상한보다 큽니다: {self.lower} > {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def __add__(self, other: "BoundPair") -> "BoundPair":
        return BoundPair(self.lower + other.lower, self.upper + other.upper, min(self.level, other.level))

    def shift(self, value: float) -> "BoundPair":
        return BoundPair(self.lower + value, self.upper + value, self.level)

    def negate(self) -> "BoundPair":
        return BoundPair(-self.upper, -self.lower, self.level)

    def scale(self, factor: float) -> "BoundPair":
        if factor < 0:
            raise BoundInputError("음수 배율은 negate() 를 사용하세요")
        return BoundPair(self.lower * factor, self.upper * factor, self.level)


@dataclass(frozen=True)
class EntropyEstimate:
    """엔트로피 추정값 (nats)"""
    value: float


def _floor_log(values: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(values, LIKELIHOOD_FLOOR))


def _log_weights(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def _weighted_log_sum(weights: np.ndarray, log_lik: np.ndarray, sums: np.ndarray) -> float:
    """Σ_i w^i (log p(z|x^i) + log max(sum_i, τ))"""
    return float(np.sum(weights * (log_lik + _floor_log(sums))))


def _check_pair(prev: ParticleBelief, next_: ParticleBelief):
    if prev.size != next_.size:
        raise BoundInputError(f"연속 belief 의 파티클 수가 다릅니다: {prev.size} vs {next_.size}")


def _check_view(view: SimplifiedView, belief: ParticleBelief, name: str):
    if view.order.shape[0] != belief.size:
        raise BoundInputError(f"{name} view 가 belief 와 맞지 않습니다")


def boers_entropy(
    prev: ParticleBelief,
    next_: ParticleBelief,
    action: np.ndarray,
    observation: np.ndarray,
    models: WorldModels
) -> EntropyEstimate:
    """정확한 Boers 추정 - 전이 밀도 N² 회"""
    _check_pair(prev, next_)
    n = prev.size

    log_lik = models.sensor.log_density(observation, next_.particles)
    models.counter.observation += n

    density = models.transition.pairwise_density(next_.particles, prev.particles, action)
    models.counter.transition += n * n
    inner = density @ prev.weights

    term_a = max(float(logsumexp(log_lik + _log_weights(prev.weights))), LOG_FLOOR)
    term_b = -_weighted_log_sum(next_.weights, log_lik, inner)
    return EntropyEstimate(term_a + term_b)


def term_a_bounds(
    view_next: SimplifiedView,
    prev: ParticleBelief,
    next_: ParticleBelief,
    observation: np.ndarray,
    models: WorldModels,
    n_peak: Optional[float] = None
) -> BoundPair:
    """항 (a) 경계: log Σ_{A} p w_k ≤ (a) ≤ log[Σ_{A} p w_k + n(1 - Σ_{A} w_k)]"""
    _check_pair(prev, next_)
    _check_view(view_next, next_, "next")
    n_peak = models.sensor.peak if n_peak is None else n_peak

    idx = view_next.indices
    log_lik = models.sensor.log_density(observation, next_.particles[idx])
    models.counter.observation += idx.size

    log_partial = float(logsumexp(log_lik + _log_weights(prev.weights[idx])))
    mask = np.ones(prev.size, dtype=bool)
    mask[idx] = False
    excluded = float(prev.weights[mask].sum())

    lower = max(log_partial, LOG_FLOOR)
    upper = max(float(np.logaddexp(log_partial, _log_excluded(n_peak, excluded))), LOG_FLOOR)
    return BoundPair(lower, upper, view_next.level)


def _log_excluded(peak: float, excluded: float) -> float:
    if excluded <= 0.0:
        return -np.inf
    return math.log(peak) + math.log(excluded)


def term_b_bounds(
    view_prev: SimplifiedView,
    view_next: SimplifiedView,
    prev: ParticleBelief,
    next_: ParticleBelief,
    action: np.ndarray,
    observation: np.ndarray,
    models: WorldModels,
    m_peak: Optional[float] = None
) -> BoundPair:
    """항 (b) 경계 - 하한은 A_{k+1} 에 대해 전체 안쪽 합, 상한은 A_k 로 제한한 안쪽 합"""
    _check_pair(prev, next_)
    _check_view(view_prev, prev, "prev")
    _check_view(view_next, next_, "next")
    m_peak = models.transition.peak if m_peak is None else m_peak
    n = prev.size

    log_lik = models.sensor.log_density(observation, next_.particles)
    models.counter.observation += n

    prev_idx = view_prev.indices
    partial_density = models.transition.pairwise_density(
        next_.particles, prev.particles[prev_idx], action
    )
    models.counter.transition += n * prev_idx.size
    partial = partial_density @ prev.weights[prev_idx]

    next_idx = view_next.indices
    full_density = models.transition.pairwise_density(
        next_.particles[next_idx], prev.particles, action
    )
    models.counter.transition += next_idx.size * n
    full = full_density @ prev.weights

    outside = np.ones(n, dtype=bool)
    outside[next_idx] = False
    w = next_.weights
    lower = -(
        _weighted_log_sum(w[next_idx], log_lik[next_idx], full)
        + float(np.sum(w[outside] * (math.log(m_peak) + log_lik[outside])))
    )
    upper = -_weighted_log_sum(w, log_lik, partial)
    return BoundPair(lower, upper, min(view_prev.level, view_next.level))


# ========== 재사용 캐시 ==========

@dataclass(eq=False)
class EntropyBoundCache:
    """한 전이 (b_k --a,z--> b_{k+1}) 의 부분합 캐시"""
    action: np.ndarray
    observation: np.ndarray
    prev_id: Optional[int]
    next_id: Optional[int]
    levels: Tuple[int, int]
    # 모든 i 에 대한 log p(z|x^i_{k+1}) (생성 시 1회)
    log_likelihoods: np.ndarray
    prev_mask: np.ndarray
    next_mask: np.ndarray
    # log Σ_{i∈A_{k+1}} p(z|x^i) w^i_k
    term_a_log_partial: float = -np.inf
    # 1 - Σ_{i∈A_{k+1}} w^i_k
    term_a_excluded_mass: float = 1.0
    # Σ_{j∈A_k} p(x^i|x^j, a) w^j_k, 모든 i
    term_b_inner: np.ndarray = None
    # Σ_j p(x^i|x^j, a) w^j_k, i∈A_{k+1} 만 유효 (나머지 NaN)
    term_b_full: np.ndarray = None
    # Σ_{i∈A_{k+1}} w^i_{k+1} log[p(z|x^i) full_i]
    term_b_lower_partial: float = 0.0
    # 계산한 전이 밀도 p(x^i_{k+1}|x^j_k, a), 미계산은 NaN (양쪽 view 가 전체가 되면 해제)
    transition_table: Optional[np.ndarray] = field(default=None, repr=False)
    hits: int = 0

    @property
    def prev_indices(self) -> np.ndarray:
        return np.flatnonzero(self.prev_mask)

    @property
    def next_indices(self) -> np.ndarray:
        return np.flatnonzero(self.next_mask)

    @property
    def level(self) -> int:
        return min(self.levels)

    @property
    def is_complete(self) -> bool:
        return bool(self.prev_mask.all() and self.next_mask.all())


def _empty_cache(
    prev: ParticleBelief,
    next_: ParticleBelief,
    action: np.ndarray,
    observation: np.ndarray,
    models: WorldModels,
    prev_id: Optional[int],
    next_id: Optional[int]
) -> EntropyBoundCache:
    n = prev.size
    log_lik = models.sensor.log_density(observation, next_.particles)
    models.counter.observation += n
    return EntropyBoundCache(
        action=np.asarray(action, dtype=float),
        observation=np.asarray(observation, dtype=float),
        prev_id=prev_id,
        next_id=next_id,
        levels=(-1, -1),
        log_likelihoods=log_lik,
        prev_mask=np.zeros(n, dtype=bool),
        next_mask=np.zeros(n, dtype=bool),
        term_b_inner=np.zeros(n),
        term_b_full=np.full(n, np.nan),
        transition_table=np.full((n, n), np.nan),
    )


def _extend_cache(
    cache: EntropyBoundCache,
    added_prev: np.ndarray,
    added_next: np.ndarray,
    prev: ParticleBelief,
    next_: ParticleBelief,
    models: WorldModels
):
    """A_k ∪= B_k, A_{k+1} ∪= B_{k+1} - 전이 밀도 쌍은 최대 한 번씩만 계산"""
    added_prev = np.unique(np.asarray(added_prev, dtype=np.int64))
    added_next = np.unique(np.asarray(added_next, dtype=np.int64))
    if np.any(cache.prev_mask[added_prev]) or np.any(cache.next_mask[added_next]):
        raise BoundInputError("추가 인덱스가 이미 캐시된 view 와 겹칩니다")
    if cache.is_complete:
        return

    action = cache.action
    w_prev = prev.weights
    table = cache.transition_table

    # 1) A_k 확장: 모든 i 의 부분 안쪽 합 갱신
    if added_prev.size:
        known = np.flatnonzero(cache.next_mask)
        if known.size:
            # A_{k+1} 행은 들어올 때 A_k 밖 열을 이미 계산해 둠
            cache.term_b_inner[known] += table[np.ix_(known, added_prev)] @ w_prev[added_prev]
            cache.hits += known.size
        others = np.flatnonzero(~cache.next_mask)
        if others.size:
            density = models.transition.pairwise_density(
                next_.particles[others], prev.particles[added_prev], action
            )
            models.counter.transition += others.size * added_prev.size
            table[np.ix_(others, added_prev)] = density
            cache.term_b_inner[others] += density @ w_prev[added_prev]
        cache.prev_mask[added_prev] = True

    # 2) A_{k+1} 확장: 새 행의 전체 안쪽 합 = 부분합 + A_k 밖 열
    if added_next.size:
        complement = np.flatnonzero(~cache.prev_mask)
        if complement.size:
            density = models.transition.pairwise_density(
                next_.particles[added_next], prev.particles[complement], action
            )
            models.counter.transition += added_next.size * complement.size
            table[np.ix_(added_next, complement)] = density
            cache.term_b_full[added_next] = cache.term_b_inner[added_next] + density @ w_prev[complement]
        else:
            cache.term_b_full[added_next] = cache.term_b_inner[added_next]
        cache.next_mask[added_next] = True

        block = cache.log_likelihoods[added_next] + _log_weights(w_prev[added_next])
        cache.term_a_log_partial = float(np.logaddexp(cache.term_a_log_partial, logsumexp(block)))

    if cache.is_complete:
        # 전체 표가 채워졌으므로 정확 추정과 같은 순서로 다시 합산
        full = table @ w_prev
        cache.term_b_inner = full
        cache.term_b_full = full.copy()
        cache.term_a_log_partial = float(logsumexp(cache.log_likelihoods + _log_weights(w_prev)))
        cache.transition_table = None
    elif cache.prev_mask.all():
        cache.term_b_inner[cache.next_mask] = cache.term_b_full[cache.next_mask]

    cache.term_a_excluded_mass = float(w_prev[~cache.next_mask].sum())
    idx = cache.next_indices
    cache.term_b_lower_partial = _weighted_log_sum(
        next_.weights[idx], cache.log_likelihoods[idx], cache.term_b_full[idx]
    )


def cache_term_bounds(
    cache: EntropyBoundCache,
    next_: ParticleBelief,
    models: WorldModels
) -> Tuple[BoundPair, BoundPair]:
    """캐시 상태에서 (항 a 경계, 항 b 경계)"""
    level = cache.level
    log_partial = cache.term_a_log_partial
    a_lower = max(log_partial, LOG_FLOOR)
    a_upper = max(
        float(np.logaddexp(log_partial, _log_excluded(models.sensor.peak, cache.term_a_excluded_mass))),
        LOG_FLOOR
    )

    w = next_.weights
    log_lik = cache.log_likelihoods
    if cache.next_mask.all():
        b_lower = -_weighted_log_sum(w, log_lik, cache.term_b_full)
    else:
        outside = ~cache.next_mask
        b_lower = -(
            cache.term_b_lower_partial
            + float(np.sum(w[outside] * (math.log(models.transition.peak) + log_lik[outside])))
        )
    b_upper = -_weighted_log_sum(w, log_lik, cache.term_b_inner)
    return BoundPair(a_lower, a_upper, level), BoundPair(b_lower, b_upper, level)


def _bounds_from_cache(cache: EntropyBoundCache, next_: ParticleBelief, models: WorldModels) -> BoundPair:
    term_a, term_b = cache_term_bounds(cache, next_, models)
    return term_a + term_b


def build_entropy_cache(
    view_prev: SimplifiedView,
    view_next: SimplifiedView,
    prev: ParticleBelief,
    next_: ParticleBelief,
    action: np.ndarray,
    observation: np.ndarray,
    models: WorldModels,
    prev_id: Optional[int] = None,
    next_id: Optional[int] = None
) -> Tuple[BoundPair, EntropyBoundCache]:
    """처음부터 계산 (빈 캐시를 view 까지 확장하는 것과 같음)"""
    _check_pair(prev, next_)
    _check_view(view_prev, prev, "prev")
    _check_view(view_next, next_, "next")

    cache = _empty_cache(prev, next_, action, observation, models, prev_id, next_id)
    _extend_cache(cache, view_prev.indices, view_next.indices, prev, next_, models)
    cache.levels = (view_prev.level, view_next.level)
    return _bounds_from_cache(cache, next_, models), cache


def entropy_bounds(
    view_prev: SimplifiedView,
    view_next: SimplifiedView,
    prev: ParticleBelief,
    next_: ParticleBelief,
    action: np.ndarray,
    observation: np.ndarray,
    models: WorldModels
) -> BoundPair:
    """엔트로피 경계 = 항 (a) 경계 + 항 (b) 경계, 비용 O(N·N^s)"""
    bounds, _ = build_entropy_cache(view_prev, view_next, prev, next_, action, observation, models)
    return bounds


def refine_entropy_bounds(
    cache: EntropyBoundCache,
    added_prev: np.ndarray,
    added_next: np.ndarray,
    prev: ParticleBelief,
    next_: ParticleBelief,
    models: WorldModels,
    levels: Optional[Tuple[int, int]] = None
) -> Tuple[BoundPair, EntropyBoundCache]:
    """이전 레벨 캐시에 B_k, B_{k+1} 만 추가해서 다음 레벨 경계 계산"""
    _check_pair(prev, next_)
    if cache.prev_mask.shape[0] != prev.size:
        raise BoundInputError("캐시와 belief 의 파티클 수가 다릅니다")

    _, old_term_b = cache_term_bounds(cache, next_, models)
    _extend_cache(cache, added_prev, added_next, prev, next_, models)
    if levels is None:
        levels = (cache.levels[0] + 1, cache.levels[1] + 1)
    cache.levels = tuple(levels)

    term_a, term_b = cache_term_bounds(cache, next_, models)
    if term_b.lower < old_term_b.lower - 1e-12:
        logger.debug(
            "항 (b) 하한 감소: %.6g → %.6g (전이 %s→%s, 레벨 %s)",
            old_term_b.lower, term_b.lower, cache.prev_id, cache.next_id, cache.levels
        )
    return term_a + term_b, cache


# ========== 비교용 추정기 ==========

def naive_weight_entropy(belief: ParticleBelief) -> float:
    """가중치의 이산 엔트로피 -Σ w log w"""
    return float(np.sum(entr(belief.weights)))


def silverman_bandwidth(belief: ParticleBelief, floor: float = KDE_BANDWIDTH_FLOOR) -> np.ndarray:
    """차원별 h_j = σ_j (4 / ((d+2) N))^{1/(d+4)}, 가중 표준편차 사용"""
    n, d = belief.particles.shape
    centered = belief.particles - belief.mean()
    sigma = np.sqrt(belief.weights @ (centered ** 2))
    factor = (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))
    return np.maximum(sigma * factor, floor)


def kde_entropy(belief: ParticleBelief, floor: float = KDE_BANDWIDTH_FLOOR, chunk: int = 512) -> float:
    """가우시안 곱 커널 KDE resubstitution 엔트로피"""
    if belief.size < 2:
        raise BoundInputError("KDE 엔트로피는 파티클이 2개 이상 필요합니다")

    h = silverman_bandwidth(belief, floor)
    x = belief.particles / h
    log_norm = -float(np.sum(np.log(np.sqrt(2.0 * math.pi) * h)))
    log_w = _log_weights(belief.weights)

    log_p = np.empty(belief.size)
    for start in range(0, belief.size, chunk):
        block = x[start:start + chunk]
        sq = np.sum((block[:, None, :] - x[None, :, :]) ** 2, axis=-1)
        log_p[start:start + chunk] = logsumexp(log_w[None, :] - 0.5 * sq, axis=1) + log_norm

    return float(-np.sum(belief.weights * log_p))
