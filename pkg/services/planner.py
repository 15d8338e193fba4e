"""
한줌 플래너
- 정확 기준 플래너 (모든 노드에서 Boers 엔트로피 정확 계산)
- 자식 가지치기, 적응형 단순화 (필요한 가지만 단순화 레벨을 올림)
- plan / receding horizon 실행
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Set, Tuple

import numpy as np

from config import DEFAULT_POMCP_ROLLOUTS, ESS_RESAMPLE_RATIO, LIKELIHOOD_FLOOR
from .beacon_world import (
    BeaconWorldConfig,
    WorldModels,
    expected_distance_to_goal,
    goal_reached,
    simulate_truth_step,
)
from .belief import (
    ParticleBelief,
    SimplificationSchedule,
    SimplifiedView,
    effective_sample_size,
    make_stream,
    propagate_and_reweight,
    refine,
    simplify,
    systematic_resample,
)
from .belief_tree import BeliefTree, BeliefTreeNode, build_tree
from .entropy_bounds import BoundPair, boers_entropy, build_entropy_cache, refine_entropy_bounds

logger = logging.getLogger(__name__)

# 서브트리 경계 = BoundPair (level 이 s^j)
SubtreeBounds = BoundPair


@dataclass
class PolicyTree:
    """도달 가능한 노드 id → 선택 행동"""
    actions: Dict[int, int]
    root_action: int
    value: Optional[float] = None

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.actions

    def get(self, node_id: int, default=None):
        return self.actions.get(node_id, default)


class BeliefReward:
    """r(b) = -(E_b||x - x^t||_1 + Ĥ(b)), 루트는 0"""

    def __init__(self, goal, models: WorldModels):
        self.goal = np.asarray(goal, dtype=float)
        self.models = models

    def distance(self, node: BeliefTreeNode) -> float:
        if node.distance is None:
            node.distance = expected_distance_to_goal(node.belief, self.goal)
        return node.distance

    def entropy(self, node: BeliefTreeNode) -> float:
        parent = node.parent
        return boers_entropy(
            parent.belief, node.belief,
            self.models.action_vector(node.action), node.observation, self.models
        ).value

    def __call__(self, node: BeliefTreeNode) -> float:
        if node.is_root:
            return 0.0
        return -(self.distance(node) + self.entropy(node))


def _collect(root: BeliefTreeNode) -> List[BeliefTreeNode]:
    """전위 순회 (부모가 자식보다 먼저)"""
    order, stack = [], [root]
    while stack:
        node = stack.pop()
        order.append(node)
        for action in reversed(node.actions):
            stack.extend(reversed(node.children[action]))
    return order


def _root_of(tree) -> BeliefTreeNode:
    return tree.root if isinstance(tree, BeliefTree) else tree


def _policy_from(root: BeliefTreeNode, best: Mapping[int, int], value: Optional[float] = None) -> PolicyTree:
    actions = {}
    stack = [root]
    while stack:
        node = stack.pop()
        action = best.get(node.node_id)
        if action is None:
            continue
        actions[node.node_id] = action
        stack.extend(node.children[action])
    return PolicyTree(actions=actions, root_action=best.get(root.node_id), value=value)


class PlanBudgetExceeded(RuntimeError):
    """정확 플래너가 시간 제한을 넘겨 중단됨"""

    def __init__(self, elapsed: float, budget: float):
        super().__init__(f"시간 제한 초과: {elapsed:.2f}s > {budget:.2f}s")
        self.elapsed = elapsed
        self.budget = budget


def exact_objective(
    tree,
    reward_fn: Callable[[BeliefTreeNode], float],
    time_budget: Optional[float] = None
) -> Tuple[float, PolicyTree]:
    """Bellman 최적 방정식을 아래에서 위로 정확히 계산 (동률이면 낮은 행동 인덱스)

    time_budget (초) 이 있으면 노드마다 경과 시간을 확인하고 넘으면 PlanBudgetExceeded.
    """
    root = _root_of(tree)
    values: Dict[int, float] = {}
    best: Dict[int, int] = {}
    started = time.perf_counter()

    for node in reversed(_collect(root)):
        if time_budget is not None:
            elapsed = time.perf_counter() - started
            if elapsed > time_budget:
                raise PlanBudgetExceeded(elapsed, time_budget)
        reward = reward_fn(node)
        if node.is_leaf:
            values[node.node_id] = reward
            continue
        best_q = None
        for action in node.actions:
            q = float(np.mean([values[c.node_id] for c in node.children[action]]))
            if best_q is None or q > best_q:
                best_q, best[node.node_id] = q, action
        values[node.node_id] = reward + best_q

    value = values[root.node_id]
    return value, _policy_from(root, best, value)


def evaluate_policy(tree, reward_fn: Callable[[BeliefTreeNode], float], policy: Mapping[int, int]) -> float:
    """고정 정책 J(b, π) - policy 에 없는 노드는 말단"""
    def value(node: BeliefTreeNode) -> float:
        reward = reward_fn(node)
        action = policy.get(node.node_id)
        if action is None or not node.children.get(action):
            return reward
        return reward + float(np.mean([value(c) for c in node.children[action]]))

    return value(_root_of(tree))


def subtree_values(tree, reward_fn: Callable[[BeliefTreeNode], float]) -> Dict[int, Dict[Any, float]]:
    """노드별 정확 값 {'value': V, action: Q(a)} (검증용)"""
    root = _root_of(tree)
    table: Dict[int, Dict[Any, float]] = {}
    for node in reversed(_collect(root)):
        entry: Dict[Any, float] = {}
        reward = reward_fn(node)
        for action in node.actions:
            entry[action] = float(np.mean([table[c.node_id]["value"] for c in node.children[action]]))
        q = [entry[a] for a in node.actions]
        entry["reward"] = reward
        entry["value"] = reward + (max(q) if q else 0.0)
        table[node.node_id] = entry
    return table


def prune_actions(action_bounds: Mapping[int, BoundPair]) -> Set[int]:
    """LB* = max lower, upper < LB* 인 행동 (엄격 부등호)"""
    if not action_bounds:
        return set()
    best_lower = max(b.lower for b in action_bounds.values())
    return {a for a, b in action_bounds.items() if b.upper < best_lower}


def prune_children(node: BeliefTreeNode, action_bounds: Optional[Mapping[int, BoundPair]] = None) -> Set[int]:
    """살아있는 행동 사이 가지치기, 새로 잘린 행동 반환"""
    bounds = node.action_bounds if action_bounds is None else action_bounds
    live = {a: b for a, b in bounds.items() if a not in node.pruned}
    newly = prune_actions(live)
    node.pruned |= newly
    return newly


def _select(node: BeliefTreeNode) -> int:
    """max lower, 동률이면 낮은 인덱스"""
    return max(node.live_actions, key=lambda a: (node.action_bounds[a].lower, -a))


# ========== 적응형 단순화 ==========

class AdaptiveSimplifier:
    """트리 한 개에 대한 적응형 단순화 세션 (단일 스레드 소유)"""

    def __init__(
        self,
        tree: BeliefTree,
        models: WorldModels,
        goal,
        schedule: Optional[SimplificationSchedule] = None,
        lazy_rewards: bool = False
    ):
        self.tree = tree
        self.models = models
        self.schedule = schedule or SimplificationSchedule()
        self.lazy_rewards = lazy_rewards
        self.reward = BeliefReward(goal, models)
        self.refinements = 0
        self.cache_hits = 0

    @property
    def finest(self) -> int:
        return self.schedule.finest

    def view(self, node: BeliefTreeNode, level: int) -> SimplifiedView:
        """노드 belief 의 레벨별 view (레벨 0 부터 중첩되게 확장)"""
        views = node.views
        if level in views:
            return views[level]
        if not views:
            rng = make_stream(self.tree.seed, "simplify", node.node_id)
            views[0] = simplify(node.belief, self.schedule, 0, rng)
        top = max(views)
        while top < level:
            views[top + 1], _ = refine(views[top], node.belief, self.schedule)
            top += 1
        return views[level]

    def reward_bounds(self, node: BeliefTreeNode, level: int) -> BoundPair:
        """즉시 보상 경계: 거리는 정확히, 엔트로피만 경계"""
        if node.is_root:
            node.reward_bounds = BoundPair(0.0, 0.0, self.finest)
            return node.reward_bounds
        if node.reward_bounds is not None and node.reward_bounds.level >= level:
            self.cache_hits += 1
            return node.reward_bounds

        parent = node.parent
        view_prev = self.view(parent, level)
        view_next = self.view(node, level)
        action_vec = self.models.action_vector(node.action)

        cache = node.entropy_cache
        if cache is None:
            entropy, node.entropy_cache = build_entropy_cache(
                view_prev, view_next, parent.belief, node.belief,
                action_vec, node.observation, self.models,
                prev_id=parent.node_id, next_id=node.node_id
            )
        else:
            added_prev = np.setdiff1d(view_prev.indices, cache.prev_indices, assume_unique=True)
            added_next = np.setdiff1d(view_next.indices, cache.next_indices, assume_unique=True)
            entropy, _ = refine_entropy_bounds(
                cache, added_prev, added_next, parent.belief, node.belief, self.models,
                levels=(level, level)
            )

        distance = self.reward.distance(node)
        node.reward_bounds = BoundPair(-distance - entropy.upper, -distance - entropy.lower, level)
        return node.reward_bounds

    def action_bounds(self, node: BeliefTreeNode, action: int, level: int) -> BoundPair:
        """관측 자식 경계의 균등 평균, 레벨은 자식 레벨의 최솟값"""
        parts = [self.adapt(child, level) for child in node.children[action]]
        lower = float(np.mean([p.lower for p in parts]))
        upper = float(np.mean([p.upper for p in parts]))
        return BoundPair(lower, upper, min(p.level for p in parts))

    def adapt(self, node: BeliefTreeNode, level: int) -> SubtreeBounds:
        """노드 서브트리 경계를 level 이상으로 만들고, 행동이 하나 남을 때까지 레벨을 올린다

        lazy_rewards 이면 이미 방문한 노드는 호출 한 번에 한 단계만 한다: 자식 쪽이
        level 미만이면 자식 쪽만, 아니면 자기 보상 경계만 올린다. 그래서 반환 레벨이
        level 보다 낮을 수 있고 (상위 레벨 상승 루프가 다시 호출), 호출마다 서브트리
        어딘가의 레벨은 반드시 오른다.
        """
        self.schedule.check_level(level)
        if node.subtree_bounds is not None and node.subtree_bounds.level >= level:
            self.cache_hits += 1
            return node.subtree_bounds

        if node.is_leaf:
            node.subtree_bounds = self.reward_bounds(node, level)
            return node.subtree_bounds

        if self.lazy_rewards and node.best_action is not None:
            if node.action_bounds[node.best_action].level < level:
                self._resolve_actions(node, level)
                reward = node.reward_bounds
            else:
                reward = self.reward_bounds(node, level)
        else:
            reward = self.reward_bounds(node, level)
            self._resolve_actions(node, level)

        node.subtree_bounds = reward + node.action_bounds[node.best_action]
        return node.subtree_bounds

    def _resolve_actions(self, node: BeliefTreeNode, level: int):
        """살아있는 행동 경계를 level 로 계산 → 가지치기 → 가장 거친 행동부터 레벨 상승"""
        for action in node.live_actions:
            node.action_bounds[action] = self.action_bounds(node, action, level)
        prune_children(node)

        while len(node.live_actions) > 1:
            live = node.live_actions
            coarse = min(
                live,
                key=lambda a: (node.action_bounds[a].level, -node.action_bounds[a].width, a)
            )
            current = node.action_bounds[coarse].level
            if current >= self.finest:
                break
            logger.debug("노드 %d 행동 %d: 레벨 %d → %d", node.node_id, coarse, current, current + 1)
            node.action_bounds[coarse] = self.action_bounds(node, coarse, current + 1)
            self.refinements += 1
            prune_children(node)

        node.best_action = _select(node)

    def policy(self) -> PolicyTree:
        best = {n.node_id: n.best_action for n in self.tree.nodes if n.best_action is not None}
        return _policy_from(self.tree.root, best)


def adapt_simplification(
    node: BeliefTreeNode,
    level: int,
    simplifier: AdaptiveSimplifier
) -> Tuple[SubtreeBounds, PolicyTree]:
    """노드에서 적응형 단순화 실행 → (경계, 정책 조각)"""
    bounds = simplifier.adapt(node, level)
    best = {n.node_id: n.best_action for n in _collect(node) if n.best_action is not None}
    return bounds, _policy_from(node, best)


# ========== 플래닝 세션 ==========

@dataclass
class PlanDiagnostics:
    """플래닝 세션 기록"""
    planner: str
    builder: str
    root_action: int
    action_name: str
    lower: float
    upper: float
    level: int
    transition_calls: int
    observation_calls: int
    wall_time: float
    n_nodes: int
    refinements: int = 0
    cache_hits: int = 0
    histogram: Dict[int, Dict[int, int]] = field(default_factory=dict)

    @property
    def density_calls(self) -> int:
        return self.transition_calls + self.observation_calls

    def to_row(self) -> Dict[str, Any]:
        return {
            "planner": self.planner,
            "builder": self.builder,
            "root_action": self.root_action,
            "action_name": self.action_name,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "transition_calls": self.transition_calls,
            "observation_calls": self.observation_calls,
            "density_calls": self.density_calls,
            "refinements": self.refinements,
            "cache_hits": self.cache_hits,
            "wall_time": self.wall_time,
            "n_nodes": self.n_nodes,
        }


@dataclass
class PlanResult:
    action: int
    bounds: SubtreeBounds
    diagnostics: PlanDiagnostics
    policy: PolicyTree
    tree: BeliefTree = field(repr=False)


def level_histogram(tree: BeliefTree) -> Dict[int, Dict[int, int]]:
    """깊이별로 노드가 최종 확정된 단순화 레벨 개수 (루트 제외)"""
    histogram: Dict[int, Dict[int, int]] = {}
    for node in tree.nodes:
        if node.is_root or node.reward_bounds is None:
            continue
        per_depth = histogram.setdefault(node.depth, {})
        per_depth[node.reward_bounds.level] = per_depth.get(node.reward_bounds.level, 0) + 1
    return histogram


def plan_on_tree(
    tree: BeliefTree,
    models: WorldModels,
    world: BeaconWorldConfig,
    schedule: Optional[SimplificationSchedule] = None,
    lazy_rewards: bool = False
) -> PlanResult:
    """이미 만든 트리에서 적응형 단순화 플래닝"""
    tree.reset_planning_state()
    before = models.counter.snapshot()
    started = time.perf_counter()

    simplifier = AdaptiveSimplifier(tree, models, world.goal, schedule, lazy_rewards)
    bounds = simplifier.adapt(tree.root, 0)
    wall_time = time.perf_counter() - started
    used = models.counter.since(before)

    action = tree.root.best_action
    diagnostics = PlanDiagnostics(
        planner="adaptive",
        builder=tree.builder,
        root_action=action,
        action_name=models.action_names[action],
        lower=bounds.lower,
        upper=bounds.upper,
        level=bounds.level,
        transition_calls=used["transition"],
        observation_calls=used["observation"],
        wall_time=wall_time,
        n_nodes=tree.size,
        refinements=simplifier.refinements,
        cache_hits=simplifier.cache_hits,
        histogram=level_histogram(tree),
    )
    logger.info(
        "adaptive/%s: 행동=%s 경계=[%.4f, %.4f] 밀도 평가=%d 재단순화=%d",
        tree.builder, diagnostics.action_name, bounds.lower, bounds.upper,
        diagnostics.density_calls, simplifier.refinements
    )
    return PlanResult(action, bounds, diagnostics, simplifier.policy(), tree)


def exact_plan_on_tree(
    tree: BeliefTree,
    models: WorldModels,
    world: BeaconWorldConfig,
    schedule: Optional[SimplificationSchedule] = None,
    time_budget: Optional[float] = None
) -> PlanResult:
    """기준 플래너 - 모든 노드 엔트로피를 정확히 계산"""
    before = models.counter.snapshot()
    started = time.perf_counter()
    value, policy = exact_objective(tree, BeliefReward(world.goal, models), time_budget)
    wall_time = time.perf_counter() - started
    used = models.counter.since(before)

    finest = (schedule or SimplificationSchedule()).finest
    bounds = BoundPair(value, value, finest)
    diagnostics = PlanDiagnostics(
        planner="exact",
        builder=tree.builder,
        root_action=policy.root_action,
        action_name=models.action_names[policy.root_action],
        lower=value,
        upper=value,
        level=finest,
        transition_calls=used["transition"],
        observation_calls=used["observation"],
        wall_time=wall_time,
        n_nodes=tree.size,
    )
    logger.info(
        "exact/%s: 행동=%s J*=%.4f 밀도 평가=%d",
        tree.builder, diagnostics.action_name, value, diagnostics.density_calls
    )
    return PlanResult(policy.root_action, bounds, diagnostics, policy, tree)


def plan(
    root_belief: ParticleBelief,
    builder_id: str,
    world: BeaconWorldConfig,
    models: Optional[WorldModels] = None,
    schedule: Optional[SimplificationSchedule] = None,
    seed: Optional[int] = None,
    horizon: Optional[int] = None,
    rollouts: int = DEFAULT_POMCP_ROLLOUTS,
    lazy_rewards: bool = False
) -> PlanResult:
    """트리 생성 + 적응형 단순화 → 루트 행동, 경계, 진단"""
    models = models or WorldModels.from_config(world)
    tree = build_tree(builder_id, root_belief, world, models, seed, horizon, rollouts)
    return plan_on_tree(tree, models, world, schedule, lazy_rewards)


# ========== Receding horizon ==========

@dataclass
class RecedingResult:
    steps: List[Dict[str, Any]]
    histogram: List[Dict[str, Any]]
    snapshots: List[Dict[str, Any]]
    reached_goal: bool


def _snapshot_rows(step: int, belief: ParticleBelief, truth: np.ndarray) -> List[Dict[str, Any]]:
    rows = []
    for i, (x, w) in enumerate(zip(belief.particles, belief.weights)):
        rows.append({
            "step": step, "particle": i, "x": float(x[0]), "y": float(x[1]) if x.shape[0] > 1 else 0.0,
            "weight": float(w), "true_x": float(truth[0]), "true_y": float(truth[1]) if truth.shape[0] > 1 else 0.0,
        })
    return rows


def receding_horizon_run(
    world: BeaconWorldConfig,
    builder_id: str,
    schedule: Optional[SimplificationSchedule] = None,
    seed: Optional[int] = None,
    verify_exact: bool = False,
    rollouts: int = DEFAULT_POMCP_ROLLOUTS,
    lazy_rewards: bool = False
) -> RecedingResult:
    """plan → 첫 행동 실행 → 관측 → 필터 업데이트 (ESS 기준 리샘플링), max_steps 또는 목표 도달까지"""
    seed = world.seed if seed is None else seed
    models = WorldModels.from_config(world)
    start = np.asarray(world.start, dtype=float)

    truth_rng = make_stream(seed, "truth")
    truth = start + world.sigma_0 * truth_rng.standard_normal(start.shape)
    belief = ParticleBelief.from_gaussian(start, world.sigma_0, world.n_particles, make_stream(seed, "prior"))

    steps, histogram, snapshots = [], [], []
    snapshots.extend(_snapshot_rows(0, belief, truth))
    reached = goal_reached(truth, world)

    for step in range(world.max_steps):
        if reached:
            break
        plan_seed = int(make_stream(seed, "plan", step).integers(2 ** 31))
        session = models.fork()
        result = plan(belief, builder_id, world, session, schedule, plan_seed, rollouts=rollouts, lazy_rewards=lazy_rewards)
        diag = result.diagnostics

        row = {"step": step, "seed": seed, **diag.to_row()}
        if verify_exact:
            exact = exact_plan_on_tree(result.tree, session.fork(), world, schedule)
            row["exact_action"] = exact.action
            row["action_equal"] = exact.action == result.action
            row["exact_value"] = exact.bounds.lower

        for depth, counts in sorted(diag.histogram.items()):
            total = sum(counts.values())
            for level, count in sorted(counts.items()):
                histogram.append({
                    "step": step, "depth": depth, "level": level,
                    "count": count, "fraction": count / total,
                })

        action_vec = models.action_vector(result.action)
        truth, z = simulate_truth_step(truth, action_vec, models, truth_rng)
        belief = propagate_and_reweight(
            belief, action_vec, z, models.transition, models.sensor,
            make_stream(seed, "filter", step), floor=LIKELIHOOD_FLOOR
        )
        ess = effective_sample_size(belief)
        resampled = ess < ESS_RESAMPLE_RATIO * belief.size
        if resampled:
            belief = systematic_resample(belief, make_stream(seed, "resample", step))

        reached = goal_reached(truth, world)
        mean = belief.mean()
        row.update({
            "true_x": float(truth[0]), "true_y": float(truth[1]) if truth.shape[0] > 1 else 0.0,
            "mean_x": float(mean[0]), "mean_y": float(mean[1]) if mean.shape[0] > 1 else 0.0,
            "ess": ess, "resampled": resampled, "reached_goal": reached,
        })
        steps.append(row)
        snapshots.extend(_snapshot_rows(step + 1, belief, truth))

    return RecedingResult(steps, histogram, snapshots, reached)
