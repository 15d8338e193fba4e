from .belief import (
    ParticleBelief, SimplificationSchedule, SimplifiedView,
    DegenerateBeliefError, SimplificationLevelError,
    make_stream, propagate_and_reweight, systematic_resample, effective_sample_size,
    simplify, refine, full_view, view_weights, view_as_belief
)
from .beacon_world import (
    ACTION_DIRECTIONS, ModelError, DensityCounter,
    GaussianTransitionModel, BeaconObservationModel, BeaconWorldConfig, WorldModels,
    GaussianState, model_peak_constants, expected_distance_to_goal, simulate_truth_step,
    kalman_prior, kalman_step, gaussian_entropy, world_summary, goal_reached
)
from .entropy_bounds import (
    BoundPair, EntropyEstimate, EntropyBoundCache, BoundInputError,
    boers_entropy, term_a_bounds, term_b_bounds, entropy_bounds,
    build_entropy_cache, refine_entropy_bounds, cache_term_bounds,
    naive_weight_entropy, kde_entropy, silverman_bandwidth
)
from .lc_bounds import (
    LipschitzReward, distance_reward, belief_distance_l1,
    lc_reward_bounds, lc_objective_bounds
)
from .belief_tree import (
    BeliefTreeNode, BeliefTree, BUILDER_FUNCTIONS,
    build_despot_like, build_powss_like, build_pomcp_like, build_tree, propagate_child
)
from .planner import (
    SubtreeBounds, PolicyTree, BeliefReward, AdaptiveSimplifier,
    PlanDiagnostics, PlanResult, RecedingResult, PlanBudgetExceeded,
    exact_objective, evaluate_policy, subtree_values, prune_actions, prune_children,
    adapt_simplification, level_histogram, plan_on_tree, exact_plan_on_tree, plan,
    receding_horizon_run
)
from .experiment_config import (
    RunConfig, ConfigError, parse_config, validate_config, load_config,
    config_hash, emit_metadata
)
