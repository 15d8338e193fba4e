"""
한줌 belief 트리
- 노드 타입 (belief + 단순화 상태 + 경계 상태)
- 트리 형태 3종: DESPOT 형태, POWSS 형태, POMCP 형태
트리는 플래닝 전에 전부 만들어 둔다 (in-place 단순화).
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Set

import numpy as np

from config import DEFAULT_POMCP_ROLLOUTS, LIKELIHOOD_FLOOR
from .beacon_world import BeaconWorldConfig, WorldModels
from .belief import ParticleBelief, SimplifiedView, make_stream, propagate_and_reweight
from .entropy_bounds import BoundPair, EntropyBoundCache


@dataclass(eq=False)
class BeliefTreeNode:
    """belief 트리 노드"""
    node_id: int
    belief: ParticleBelief
    depth: int
    parent: Optional["BeliefTreeNode"] = field(default=None, repr=False)
    # 들어오는 간선 (부모의 행동 인덱스, 관측)
    action: Optional[int] = None
    observation: Optional[np.ndarray] = field(default=None, repr=False)
    observation_id: Optional[int] = None
    children: Dict[int, List["BeliefTreeNode"]] = field(default_factory=dict, repr=False)

    # 단순화 상태 - 레벨별 view, 들어오는 전이의 엔트로피 캐시
    views: Dict[int, SimplifiedView] = field(default_factory=dict, repr=False)
    entropy_cache: Optional[EntropyBoundCache] = field(default=None, repr=False)
    distance: Optional[float] = None

    # 경계 상태
    reward_bounds: Optional[BoundPair] = None
    action_bounds: Dict[int, BoundPair] = field(default_factory=dict, repr=False)
    subtree_bounds: Optional[BoundPair] = None
    pruned: Set[int] = field(default_factory=set)
    best_action: Optional[int] = None

    @property
    def is_root(self) -> bool:
        return self.parent is None

    @property
    def is_leaf(self) -> bool:
        return not any(self.children.values())

    @property
    def actions(self) -> List[int]:
        return sorted(a for a, kids in self.children.items() if kids)

    @property
    def live_actions(self) -> List[int]:
        return [a for a in self.actions if a not in self.pruned]

    def add_child(self, action: int, child: "BeliefTreeNode"):
        siblings = self.children.setdefault(action, [])
        child.observation_id = len(siblings)
        siblings.append(child)

    def reset_planning_state(self):
        """같은 트리를 다시 플래닝할 때 캐시/경계 초기화"""
        self.views.clear()
        self.entropy_cache = None
        self.reward_bounds = None
        self.action_bounds.clear()
        self.subtree_bounds = None
        self.pruned.clear()
        self.best_action = None


@dataclass(eq=False)
class BeliefTree:
    """빌드된 트리 + 빌드 정보"""
    root: BeliefTreeNode
    builder: str
    horizon: int
    seed: int
    nodes: List[BeliefTreeNode] = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def iter_nodes(self) -> Iterator[BeliefTreeNode]:
        return iter(self.nodes)

    def nodes_at_depth(self, depth: int) -> List[BeliefTreeNode]:
        return [node for node in self.nodes if node.depth == depth]

    @property
    def max_depth(self) -> int:
        return max(node.depth for node in self.nodes)

    def leaves(self) -> List[BeliefTreeNode]:
        return [node for node in self.nodes if node.is_leaf]

    def reset_planning_state(self):
        for node in self.nodes:
            node.reset_planning_state()


def _new_tree(root_belief: ParticleBelief, builder: str, horizon: int, seed: int) -> BeliefTree:
    root = BeliefTreeNode(node_id=0, belief=root_belief, depth=0)
    return BeliefTree(root=root, builder=builder, horizon=horizon, seed=seed, nodes=[root])


def propagate_child(
    parent_belief: ParticleBelief,
    action_vec: np.ndarray,
    observation: np.ndarray,
    models: WorldModels,
    seed: int,
    node_id: int
) -> ParticleBelief:
    """노드 id 별 스트림으로 파티클 필터 1단계 (재현 / replay 용)"""
    return propagate_and_reweight(
        parent_belief, action_vec, observation,
        models.transition, models.sensor,
        make_stream(seed, "propagate", node_id),
        floor=LIKELIHOOD_FLOOR
    )


def _attach(
    tree: BeliefTree,
    parent: BeliefTreeNode,
    action: int,
    observation: np.ndarray,
    models: WorldModels
) -> BeliefTreeNode:
    node_id = len(tree.nodes)
    belief = propagate_child(
        parent.belief, models.action_vector(action), observation, models, tree.seed, node_id
    )
    child = BeliefTreeNode(
        node_id=node_id,
        belief=belief,
        depth=parent.depth + 1,
        parent=parent,
        action=action,
        observation=np.asarray(observation, dtype=float),
    )
    parent.add_child(action, child)
    tree.nodes.append(child)
    return child


def _sample_observation(
    belief: ParticleBelief,
    action_vec: np.ndarray,
    models: WorldModels,
    rng: np.random.Generator,
    particle: Optional[int] = None
) -> np.ndarray:
    """파티클 하나를 (가중치로) 골라 전파한 뒤 관측 생성"""
    if particle is None:
        particle = int(rng.choice(belief.size, p=belief.weights))
    x_next = models.transition.sample(belief.particles[particle], action_vec, rng)
    return models.sensor.sample(x_next, rng)


def _check_horizon(horizon: int):
    if horizon < 1:
        raise ValueError(f"horizon 은 1 이상이어야 합니다: {horizon}")


def build_despot_like(
    root_belief: ParticleBelief,
    world: BeaconWorldConfig,
    models: WorldModels,
    seed: Optional[int] = None,
    horizon: Optional[int] = None
) -> BeliefTree:
    """모든 행동 전개, 행동마다 관측 n_z 개 (기본 1)"""
    horizon = world.horizon if horizon is None else horizon
    seed = world.seed if seed is None else seed
    _check_horizon(horizon)

    tree = _new_tree(root_belief, "despot", horizon, seed)
    rng = make_stream(seed, "observe")
    frontier = [tree.root]
    for _ in range(horizon):
        next_frontier = []
        for node in frontier:
            for action in range(models.n_actions):
                action_vec = models.action_vector(action)
                for _ in range(world.n_observations):
                    z = _sample_observation(node.belief, action_vec, models, rng)
                    next_frontier.append(_attach(tree, node, action, z, models))
        frontier = next_frontier
    return tree


def build_powss_like(
    root_belief: ParticleBelief,
    world: BeaconWorldConfig,
    models: WorldModels,
    seed: Optional[int] = None,
    horizon: Optional[int] = None
) -> BeliefTree:
    """모든 행동 전개, 파티클마다 관측 1개 (n_z = N)"""
    horizon = world.horizon if horizon is None else horizon
    seed = world.seed if seed is None else seed
    _check_horizon(horizon)

    tree = _new_tree(root_belief, "powss", horizon, seed)
    rng = make_stream(seed, "observe")
    frontier = [tree.root]
    for _ in range(horizon):
        next_frontier = []
        for node in frontier:
            for action in range(models.n_actions):
                action_vec = models.action_vector(action)
                for particle in range(node.belief.size):
                    z = _sample_observation(node.belief, action_vec, models, rng, particle)
                    next_frontier.append(_attach(tree, node, action, z, models))
        frontier = next_frontier
    return tree


def build_pomcp_like(
    root_belief: ParticleBelief,
    world: BeaconWorldConfig,
    models: WorldModels,
    seed: Optional[int] = None,
    horizon: Optional[int] = None,
    rollouts: int = DEFAULT_POMCP_ROLLOUTS
) -> BeliefTree:
    """루트에서 rollout R 번, 깊이마다 새 행동 전개 / 기존 자식 재진입을 무작위로 선택"""
    horizon = world.horizon if horizon is None else horizon
    seed = world.seed if seed is None else seed
    _check_horizon(horizon)
    if rollouts < 1:
        raise ValueError(f"rollout 수는 1 이상이어야 합니다: {rollouts}")

    tree = _new_tree(root_belief, "pomcp", horizon, seed)
    rng = make_stream(seed, "rollout")
    for _ in range(rollouts):
        node = tree.root
        for _ in range(horizon):
            tried = node.actions
            untried = [a for a in range(models.n_actions) if a not in tried]
            if untried and (not tried or rng.random() < 0.5):
                action = int(rng.choice(untried))
                z = _sample_observation(node.belief, models.action_vector(action), models, rng)
                node = _attach(tree, node, action, z, models)
            else:
                action = int(rng.choice(tried))
                node = node.children[action][0]
    return tree


BUILDER_FUNCTIONS = {
    "despot": build_despot_like,
    "powss": build_powss_like,
    "pomcp": build_pomcp_like,
}


def build_tree(
    builder: str,
    root_belief: ParticleBelief,
    world: BeaconWorldConfig,
    models: WorldModels,
    seed: Optional[int] = None,
    horizon: Optional[int] = None,
    rollouts: int = DEFAULT_POMCP_ROLLOUTS
) -> BeliefTree:
    """builder 이름으로 트리 생성"""
    if builder not in BUILDER_FUNCTIONS:
        raise ValueError(f"알 수 없는 트리 형태: {builder}")
    if builder == "pomcp":
        return build_pomcp_like(root_belief, world, models, seed, horizon, rollouts)
    return BUILDER_FUNCTIONS[builder](root_belief, world, models, seed, horizon)
