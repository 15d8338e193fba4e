"""
Lipschitz 보상 경계 테스트
"""
import numpy as np
import pytest

from services import (
    BeliefTreeNode,
    BoundInputError,
    LipschitzReward,
    ParticleBelief,
    SimplificationSchedule,
    SimplifiedView,
    WorldModels,
    belief_distance_l1,
    build_despot_like,
    distance_reward,
    evaluate_policy,
    full_view,
    lc_objective_bounds,
    lc_reward_bounds,
    make_stream,
    refine,
    simplify,
)

SCHEDULE = SimplificationSchedule()


def _half_view() -> SimplifiedView:
    return SimplifiedView(indices=[0, 1], level=0, fraction=0.5, order=[0, 1, 2, 3])


def _diameter(nodes, goal) -> float:
    """트리 안 모든 파티클의 최대 L1 목표 거리"""
    return max(float(np.max(np.sum(np.abs(n.belief.particles - np.asarray(goal)), axis=1))) for n in nodes)


def test_distance_hand_example():
    belief = ParticleBelief.uniform(np.zeros((4, 2)))
    assert belief_distance_l1(belief, _half_view()) == pytest.approx(1.0)


def test_distance_full_view_is_zero():
    rng = make_stream(0, "lc")
    belief = ParticleBelief(rng.standard_normal((10, 2)), rng.dirichlet(np.ones(10)))
    assert belief_distance_l1(belief, full_view(belief, SCHEDULE)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_distance_shrinks_along_refinement(seed):
    rng = make_stream(seed, "lc")
    belief = ParticleBelief(rng.standard_normal((40, 2)), rng.dirichlet(np.ones(40)))
    view = simplify(belief, SCHEDULE, 0, rng)
    last = belief_distance_l1(belief, view)
    while view.level < SCHEDULE.finest:
        view, _ = refine(view, belief, SCHEDULE)
        current = belief_distance_l1(belief, view)
        assert current <= last + 1e-12
        last = current
    assert last == pytest.approx(0.0, abs=1e-12)


def test_negative_lipschitz_rejected():
    with pytest.raises(BoundInputError):
        LipschitzReward(lambda belief, action=None: 0.0, -1.0)


def test_zero_lipschitz_gives_point_bounds():
    belief = ParticleBelief(np.arange(8.0).reshape(4, 2), [0.1, 0.2, 0.3, 0.4])
    reward = distance_reward([0.0, 0.0], 0.0)
    bounds = lc_reward_bounds(reward, belief, _half_view())
    assert bounds.lower == bounds.upper
    assert bounds.width == 0.0


def test_full_view_reward_bounds_are_exact():
    rng = make_stream(1, "lc")
    belief = ParticleBelief(rng.standard_normal((12, 2)), rng.dirichlet(np.ones(12)))
    reward = distance_reward([3.0, 1.0], 50.0)
    bounds = lc_reward_bounds(reward, belief, full_view(belief, SCHEDULE))
    assert bounds.lower == pytest.approx(reward(belief), abs=1e-12)
    assert bounds.upper == pytest.approx(reward(belief), abs=1e-12)


def test_reward_bounds_bracket_exact_reward():
    for seed in range(200):
        rng = make_stream(seed, "lc-reward")
        n = int(rng.integers(2, 40))
        particles = rng.uniform(-10.0, 10.0, size=(n, 2))
        belief = ParticleBelief(particles, rng.dirichlet(np.ones(n)))
        goal = np.array([10.0, 10.0])
        reward = distance_reward(goal, _diameter([BeliefTreeNode(0, belief, 0)], goal))
        view = simplify(belief, SCHEDULE, int(rng.integers(0, 5)), rng)

        bounds = lc_reward_bounds(reward, belief, view)
        exact = reward(belief)
        assert bounds.lower - 1e-9 <= exact <= bounds.upper + 1e-9
        assert bounds.width == pytest.approx(2 * reward.lipschitz * belief_distance_l1(belief, view))


# ========== 목적함수 경계 ==========

def _random_tree(seed: int, world):
    rng = make_stream(seed, "lc-tree")
    horizon = int(rng.integers(1, 3))
    n = int(rng.integers(4, 12))
    cell = world.replace(n_particles=n, horizon=horizon, seed=seed)
    models = WorldModels.from_config(cell)
    root = ParticleBelief.from_gaussian(np.array(cell.start), cell.sigma_0, n, make_stream(seed, "prior"))
    tree = build_despot_like(root, cell, models, seed)
    policy = {node.node_id: int(rng.choice(node.actions)) for node in tree.nodes if not node.is_leaf}
    levels = {node.node_id: int(rng.integers(0, SCHEDULE.finest + 1)) for node in tree.nodes}
    return tree, policy, levels


def _check_objective_bounds(world, cases: int):
    for seed in range(cases):
        tree, policy, levels = _random_tree(seed, world)
        reward = distance_reward(world.goal, _diameter(tree.nodes, world.goal))
        views = {
            node.node_id: simplify(node.belief, SCHEDULE, levels[node.node_id], make_stream(seed, "v", node.node_id))
            for node in tree.nodes
        }
        bounds = lc_objective_bounds(tree.root, reward, policy, lambda node: views[node.node_id])
        exact = evaluate_policy(tree, lambda node: reward(node.belief, node.action), policy)
        assert bounds.lower - 1e-9 <= exact <= bounds.upper + 1e-9, seed

        full = lc_objective_bounds(tree.root, reward, policy, lambda node: full_view(node.belief, SCHEDULE))
        assert full.lower == pytest.approx(exact, abs=1e-9)
        assert full.upper == pytest.approx(exact, abs=1e-9)


def test_objective_bounds_bracket_policy_value(setting_1):
    _check_objective_bounds(setting_1, 100)


@pytest.mark.slow
def test_objective_bounds_bracket_policy_value_full(setting_1):
    _check_objective_bounds(setting_1, 1000)


def test_objective_bounds_horizon_one_reduces_to_reward_bounds():
    belief = ParticleBelief.uniform(np.arange(8.0).reshape(4, 2))
    root = BeliefTreeNode(node_id=0, belief=belief, depth=0)
    reward = distance_reward([0.0, 0.0], 20.0)
    single = lc_objective_bounds(root, reward, {}, lambda node: _half_view())
    expected = lc_reward_bounds(reward, belief, _half_view())
    assert (single.lower, single.upper) == (expected.lower, expected.upper)


def test_objective_bounds_two_level_hand_expansion():
    rng = make_stream(3, "hand")
    beliefs = [ParticleBelief(rng.uniform(0, 5, (4, 2)), rng.dirichlet(np.ones(4))) for _ in range(3)]
    root = BeliefTreeNode(node_id=0, belief=beliefs[0], depth=0)
    for i in (1, 2):
        root.add_child(0, BeliefTreeNode(node_id=i, belief=beliefs[i], depth=1, parent=root, action=0))
    reward = distance_reward([5.0, 5.0], 10.0)
    view = _half_view()

    bounds = lc_objective_bounds(root, reward, {0: 0}, lambda node: view)
    parts = [lc_reward_bounds(reward, b, view) for b in beliefs]
    assert bounds.lower == pytest.approx(parts[0].lower + 0.5 * (parts[1].lower + parts[2].lower), abs=1e-12)
    assert bounds.upper == pytest.approx(parts[0].upper + 0.5 * (parts[1].upper + parts[2].upper), abs=1e-12)
