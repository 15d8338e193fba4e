"""
한줌 Lipschitz 연속 보상 경계
- r(b^s, a) ± λ·d(b, b^s)
- 정책 트리를 따라 누적한 목적함수 경계
엔트로피 보상은 LC 가 아니므로 이 경로를 쓰지 않는다.
"""
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .belief import ParticleBelief, SimplifiedView, view_as_belief
from .beacon_world import expected_distance_to_goal
from .entropy_bounds import BoundInputError, BoundPair


@dataclass(frozen=True)
class LipschitzReward:
    """LC 보상: |r(b1,a) - r(b2,a)| ≤ λ·d(b1,b2)"""
    evaluate: Callable[[ParticleBelief, Optional[int]], float]
    lipschitz: float
    metric: str = "l1"

    def __post_init__(self):
        if self.lipschitz < 0:
            raise BoundInputError(f"Lipschitz 상수는 음수일 수 없습니다: {self.lipschitz}")
        if self.metric != "l1":
            raise BoundInputError(f"지원하지 않는 거리: {self.metric}")

    def __call__(self, belief: ParticleBelief, action: Optional[int] = None) -> float:
        return float(self.evaluate(belief, action))


def distance_reward(goal, lipschitz: float) -> LipschitzReward:
    """-E_b[||x - x^t||_1] (λ = 작업공간 안 최대 L1 거리)"""
    goal = np.asarray(goal, dtype=float)
    return LipschitzReward(lambda belief, action=None: -expected_distance_to_goal(belief, goal), lipschitz)


def belief_distance_l1(belief: ParticleBelief, view: SimplifiedView) -> float:
    """d(b, b^s) = Σ_{A} |w - w̃| + Σ_{¬A} w"""
    weights = belief.weights
    inside = weights[view.indices]
    total = inside.sum()
    if total <= 0:
        return 2.0
    mask = np.ones(belief.size, dtype=bool)
    mask[view.indices] = False
    return float(np.sum(np.abs(inside - inside / total)) + weights[mask].sum())


def lc_reward_bounds(
    reward: LipschitzReward,
    belief: ParticleBelief,
    view: SimplifiedView,
    action: Optional[int] = None
) -> BoundPair:
    if reward.lipschitz < 0:
        raise BoundInputError("Lipschitz 상수는 음수일 수 없습니다")
    value = reward(view_as_belief(view, belief), action)
    margin = reward.lipschitz * belief_distance_l1(belief, view)
    return BoundPair(value - margin, value + margin, view.level)


def lc_objective_bounds(
    root,
    reward: LipschitzReward,
    policy: Mapping[int, int],
    view_for: Callable[[object], SimplifiedView]
) -> BoundPair:
    """정책 π 를 따른 J(b, π) 경계 - 노드별 LC 경계를 기댓값 재귀로 누적

    root 는 BeliefTreeNode, policy 는 node_id → 행동, view_for 는 노드 → view.
    policy 에 없는 노드는 말단으로 본다.
    """
    node_bounds = lc_reward_bounds(reward, root.belief, view_for(root), root.action)
    action = policy.get(root.node_id)
    if action is None or not root.children.get(action):
        return node_bounds

    children = root.children[action]
    parts = [lc_objective_bounds(child, reward, policy, view_for) for child in children]
    lower = float(np.mean([p.lower for p in parts]))
    upper = float(np.mean([p.upper for p in parts]))
    level = min(p.level for p in parts)
    return node_bounds + BoundPair(lower, upper, level)
