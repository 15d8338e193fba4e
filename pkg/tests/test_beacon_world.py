"""
비콘 월드 모델 / 칼만 기준선 테스트
"""
import math

import numpy as np
import pytest
from scipy import stats

from services import (
    BeaconObservationModel,
    BeaconWorldConfig,
    DensityCounter,
    GaussianState,
    GaussianTransitionModel,
    ModelError,
    ParticleBelief,
    WorldModels,
    expected_distance_to_goal,
    gaussian_entropy,
    goal_reached,
    kalman_prior,
    kalman_step,
    make_stream,
    model_peak_constants,
    simulate_truth_step,
)


def test_transition_density_matches_scipy():
    model = GaussianTransitionModel(0.5)
    x, a, x_next = np.array([1.0, 2.0]), np.array([4.0, 0.0]), np.array([5.3, 1.8])
    expected = stats.multivariate_normal(x + a, 0.25 * np.eye(2)).pdf(x_next)
    assert model.density(x_next, x, a) == pytest.approx(expected)
    assert model.peak == pytest.approx(stats.multivariate_normal(np.zeros(2), 0.25 * np.eye(2)).pdf(np.zeros(2)))


def test_pairwise_density_shape_and_values():
    model = GaussianTransitionModel(0.7)
    rng = make_stream(0, "pairwise")
    x_next, x = rng.standard_normal((3, 2)), rng.standard_normal((5, 2))
    a = np.array([1.0, 0.0])
    table = model.pairwise_density(x_next, x, a)
    assert table.shape == (3, 5)
    assert table[2, 4] == pytest.approx(model.density(x_next[2], x[4], a))


def test_observation_noise_grows_with_range():
    sensor = BeaconObservationModel(np.array([[0.0, 0.0]]), 0.3, 1.0)
    near, far = sensor.noise_scale(np.array([[0.5, 0.0], [10.0, 0.0]]))
    assert near == pytest.approx(0.3)
    assert far == pytest.approx(3.0)


def test_observation_density_matches_scipy():
    sensor = BeaconObservationModel(np.array([[0.0, 0.0], [10.0, 0.0]]), 0.3, 1.0)
    x = np.array([8.0, 1.0])
    z = np.array([-1.5, 0.7])
    r = math.hypot(2.0, 1.0)
    expected = stats.multivariate_normal(x - np.array([10.0, 0.0]), (0.3 * r) ** 2 * np.eye(2)).pdf(z)
    assert sensor.density(z, x) == pytest.approx(expected)
    assert sensor.peak == pytest.approx(1.0 / (2.0 * math.pi * 0.09))


def test_nearest_beacon_ties_use_lowest_index():
    sensor = BeaconObservationModel(np.array([[-1.0, 0.0], [1.0, 0.0]]), 0.3, 1.0)
    idx, dist = sensor.nearest_beacon(np.array([[0.0, 0.0]]))
    assert idx[0] == 0
    assert dist[0] == pytest.approx(1.0)


def test_model_errors():
    with pytest.raises(ModelError):
        GaussianTransitionModel(0.0)
    with pytest.raises(ModelError):
        BeaconObservationModel(np.empty((0, 2)), 0.3, 1.0)


def test_peak_constants_bound_densities(models):
    m, n = model_peak_constants(models.transition, models.sensor)
    rng = make_stream(1, "peaks")
    x = rng.normal(0.0, 10.0, size=(200, 2))
    z = rng.normal(0.0, 3.0, size=2)
    assert np.all(models.sensor.density(z, x) <= n)
    assert np.all(models.transition.density(x, x, np.zeros(2)) <= m + 1e-12)


def test_world_config_round_trip(setting_1):
    assert BeaconWorldConfig.from_dict(setting_1.to_dict()) == setting_1
    changed = setting_1.replace(n_particles=20, horizon=3)
    assert (changed.n_particles, changed.horizon) == (20, 3)


@pytest.mark.parametrize("changes", [
    {"actions": []},
    {"actions": ["jump"]},
    {"horizon": 0},
    {"sigma_T": -1.0},
    {"unknown_key": 1},
])
def test_world_config_validation(setting_1, changes):
    data = setting_1.to_dict()
    data.update(changes)
    with pytest.raises(ModelError):
        BeaconWorldConfig.from_dict(data)


def test_world_models_action_vectors(setting_1):
    models = WorldModels.from_config(setting_1)
    assert models.action_names == ("left", "right")
    assert models.action_vector(1) == pytest.approx([8.0, 0.0])
    forked = models.fork()
    forked.counter.transition += 5
    assert models.counter.transition == 0


def test_density_counter_snapshot():
    counter = DensityCounter()
    before = counter.snapshot()
    counter.transition += 10
    counter.observation += 3
    assert counter.since(before) == {"transition": 10, "observation": 3}
    assert counter.total == 13
    counter.reset()
    assert counter.total == 0


def test_expected_distance_to_goal():
    belief = ParticleBelief(np.array([[0.0, 0.0], [2.0, 2.0]]), [0.25, 0.75])
    assert expected_distance_to_goal(belief, [2.0, 0.0]) == pytest.approx(0.25 * 2.0 + 0.75 * 2.0)


def test_simulate_truth_step_is_seeded(models):
    a = simulate_truth_step(np.zeros(2), models.action_vector(0), models, make_stream(0, "truth"))
    b = simulate_truth_step(np.zeros(2), models.action_vector(0), models, make_stream(0, "truth"))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_goal_reached(setting_1):
    assert goal_reached(np.array(setting_1.goal) + 0.5, setting_1)
    assert not goal_reached(np.array(setting_1.start), setting_1)


# ========== 칼만 ==========

def test_gaussian_state_requires_spd():
    with pytest.raises(ModelError):
        GaussianState(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ModelError):
        GaussianState(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_gaussian_entropy_closed_form():
    state = GaussianState(np.zeros(2), np.diag([2.0, 0.5]))
    assert gaussian_entropy(state) == pytest.approx(1.0 + math.log(2.0 * math.pi))


def test_kalman_step_linear_gaussian(linear_world):
    models = WorldModels.from_config(linear_world)
    prior = kalman_prior(linear_world)
    action = np.array([1.0, 0.0])
    z = np.array([1.2, -0.3])
    posterior = kalman_step(prior, action, z, models)

    # 스칼라 공분산: P- = 1 + 0.25, R = (0.01 * 100)^2 = 1
    p_pred, r = 1.25, 1.0
    gain = p_pred / (p_pred + r)
    assert posterior.covariance == pytest.approx(np.eye(2) * (1 - gain) * p_pred)
    predicted_z = prior.mean + action - np.array(linear_world.beacons[0])
    assert posterior.mean == pytest.approx(prior.mean + action + gain * (z - predicted_z))
    assert gaussian_entropy(posterior) < gaussian_entropy(GaussianState(prior.mean, p_pred * np.eye(2)))


def test_gaussian_entropy_scales_with_covariance():
    state = GaussianState(np.zeros(2), np.array([[2.0, 0.6], [0.6, 1.0]]))
    scaled = GaussianState(np.zeros(2), 4.0 * state.covariance)
    assert gaussian_entropy(scaled) - gaussian_entropy(state) == pytest.approx(math.log(4.0))


def test_gaussian_entropy_matches_grid_quadrature():
    cov = np.array([[2.0, 0.6], [0.6, 1.0]])
    step = 0.02
    axis = np.arange(-12.0, 12.0, step)
    xx, yy = np.meshgrid(axis, axis)
    log_p = stats.multivariate_normal(np.zeros(2), cov).logpdf(np.dstack([xx, yy]))
    numeric = -float(np.sum(np.exp(log_p) * log_p)) * step ** 2
    assert gaussian_entropy(GaussianState(np.zeros(2), cov)) == pytest.approx(numeric, abs=1e-4)


# ========== 표본 / 관측 밀도 성질 ==========

def test_transition_sample_mean_and_spread():
    model = GaussianTransitionModel(0.5)
    x, a = np.array([1.0, -2.0]), np.array([8.0, 0.0])
    samples = model.sample(np.tile(x, (20000, 1)), a, make_stream(0, "transition-mc"))
    assert np.abs(samples.mean(axis=0) - (x + a)).max() <= 4.0 * 0.5 / math.sqrt(20000)
    assert samples.std(axis=0) == pytest.approx([0.5, 0.5], rel=0.03)


def test_observation_density_continuous_inside_voronoi_cell(setting_1):
    sensor = WorldModels.from_config(setting_1).sensor
    beacon = sensor.beacons[0]
    # 두 번째 비콘 반대 방향 반직선: 셀 경계를 넘지 않고 r_min 원은 통과
    direction = beacon - sensor.beacons[1]
    direction = direction / np.linalg.norm(direction)
    z = 1.5 * sensor.r_min * direction

    def max_jump(h: float) -> float:
        t = np.arange(0.1, 4.0 * sensor.r_min, h)
        x = beacon + t[:, None] * direction
        idx, _ = sensor.nearest_beacon(x)
        assert np.all(idx == 0)
        return float(np.abs(np.diff(sensor.density(z, x))).max())

    assert max_jump(1e-5) <= 0.05 * max_jump(1e-3)


@pytest.mark.parametrize("setting", ["setting_1", "setting_2"])
def test_observation_density_decreases_with_range(request, setting):
    sensor = WorldModels.from_config(request.getfixturevalue(setting)).sensor
    beacon = sensor.beacons[0]
    innovation = 0.1 * sensor.sigma * sensor.r_min * np.array([1.0, 1.0])
    direction = np.array([0.0, 1.0]) if beacon[1] >= sensor.beacons[:, 1].max() else np.array([0.0, -1.0])

    densities = []
    for r in (sensor.r_min, 2.0 * sensor.r_min, 4.0 * sensor.r_min):
        x = beacon + r * direction
        assert sensor.nearest_beacon(x)[0][0] == 0
        densities.append(float(sensor.density(x - beacon + innovation, x)))
    assert densities[0] > densities[1] > densities[2]


# ========== 칼만 추적 ==========

def _kalman_envelope_hits(world: BeaconWorldConfig, seed: int) -> list:
    """궤적을 따라 참 상태가 칼만 평균 ±3σ 안에 있는지 (좌표별)"""
    models = WorldModels.from_config(world)
    rng = make_stream(seed, "kalman-track")
    state = kalman_prior(world)
    truth = state.mean + world.sigma_0 * rng.standard_normal(world.dim)
    hits = []
    for name in world.trajectory:
        action = models.action_vector(models.action_names.index(name))
        truth, z = simulate_truth_step(truth, action, models, rng)
        state = kalman_step(state, action, z, models)
        sigma = np.sqrt(np.diag(state.covariance))
        hits.extend(np.abs(truth - state.mean) <= 3.0 * sigma)
    return hits


def test_kalman_tracks_truth_within_envelope(linear_world):
    hits = [h for seed in range(50) for h in _kalman_envelope_hits(linear_world, seed)]
    assert np.mean(hits) >= 0.98


@pytest.mark.slow
def test_kalman_tracks_truth_within_envelope_many_runs(linear_world):
    hits = [h for seed in range(500) for h in _kalman_envelope_hits(linear_world, seed)]
    assert np.mean(hits) >= 0.99
