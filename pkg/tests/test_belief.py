"""
파티클 belief / 단순화 테스트
"""
import math

import numpy as np
import pytest

from services import (
    DegenerateBeliefError,
    GaussianTransitionModel,
    BeaconObservationModel,
    ParticleBelief,
    SimplificationLevelError,
    SimplificationSchedule,
    WorldModels,
    effective_sample_size,
    full_view,
    kalman_prior,
    kalman_step,
    make_stream,
    propagate_and_reweight,
    refine,
    simplify,
    simulate_truth_step,
    systematic_resample,
    view_as_belief,
    view_weights,
)


def _random_belief(seed: int, n: int = 40) -> ParticleBelief:
    rng = make_stream(seed, "belief")
    return ParticleBelief(rng.standard_normal((n, 2)), rng.dirichlet(np.ones(n)))


# ========== ParticleBelief ==========

def test_weights_are_normalised():
    belief = ParticleBelief(np.zeros((4, 2)), [1.0, 1.0, 2.0, 4.0])
    assert belief.weights.sum() == pytest.approx(1.0)
    assert belief.weights[3] == pytest.approx(0.5)


def test_belief_arrays_are_read_only():
    belief = ParticleBelief.uniform(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        belief.weights[0] = 1.0


@pytest.mark.parametrize("weights", [[0.5, -0.1, 0.6], [0.5, np.nan, 0.5]])
def test_invalid_weights_rejected(weights):
    with pytest.raises(ValueError):
        ParticleBelief(np.zeros((3, 2)), weights)


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        ParticleBelief(np.zeros((3, 2)), [0.5, 0.5])


def test_zero_weights_are_degenerate():
    with pytest.raises(DegenerateBeliefError):
        ParticleBelief(np.zeros((2, 2)), [0.0, 0.0])


def test_mean_and_covariance():
    belief = ParticleBelief(np.array([[0.0, 0.0], [2.0, 4.0]]), [0.5, 0.5])
    assert belief.mean() == pytest.approx([1.0, 2.0])
    assert belief.covariance() == pytest.approx(np.array([[1.0, 2.0], [2.0, 4.0]]))


# ========== propagate / resample ==========

def test_propagate_and_reweight_matches_manual_update():
    transition = GaussianTransitionModel(0.5)
    sensor = BeaconObservationModel(np.array([[0.0, 0.0]]), 0.3, 1.0)
    belief = _random_belief(1, 10)
    action = np.array([1.0, 0.0])
    z = np.array([1.0, 0.5])

    result = propagate_and_reweight(belief, action, z, transition, sensor, make_stream(3, "p"))
    particles = transition.sample(belief.particles, action, make_stream(3, "p"))
    expected = belief.weights * sensor.density(z, particles)
    assert result.particles == pytest.approx(particles)
    assert result.weights == pytest.approx(expected / expected.sum())


def test_propagate_uses_log_domain_for_tiny_likelihoods():
    transition = GaussianTransitionModel(0.5)
    sensor = BeaconObservationModel(np.array([[0.0, 0.0]]), 0.01, 0.01)
    belief = ParticleBelief.uniform(np.array([[100.0, 0.0], [101.0, 0.0]]))
    # 선형 밀도로는 underflow 하지만 log 도메인에서는 정규화 가능
    result = propagate_and_reweight(
        belief, np.zeros(2), np.array([0.0, 0.0]), transition, sensor, make_stream(0, "tiny")
    )
    assert np.all(np.isfinite(result.weights))
    assert result.weights.sum() == pytest.approx(1.0)


def test_systematic_resample_returns_uniform_weights():
    belief = ParticleBelief(np.arange(5.0).reshape(5, 1), [0.0, 0.0, 1.0, 0.0, 0.0])
    resampled = systematic_resample(belief, make_stream(0, "resample"))
    assert resampled.size == 5
    assert np.all(resampled.particles[:, 0] == 2.0)
    assert resampled.weights == pytest.approx(np.full(5, 0.2))


def test_systematic_resample_counts_track_weights():
    weights = np.array([0.1, 0.2, 0.3, 0.4])
    belief = ParticleBelief(np.arange(4.0).reshape(4, 1), weights)
    resampled = systematic_resample(belief, make_stream(5, "resample"))
    counts = np.bincount(resampled.particles[:, 0].astype(int), minlength=4)
    # systematic: 각 개수는 floor(N w) 또는 ceil(N w)
    assert np.all(np.abs(counts - 4 * weights) < 1.0)


def test_effective_sample_size():
    assert effective_sample_size(ParticleBelief.uniform(np.zeros((8, 2)))) == pytest.approx(8.0)
    assert effective_sample_size(ParticleBelief(np.zeros((3, 2)), [1.0, 0.0, 0.0])) == pytest.approx(1.0)


def _filter_matches_kalman(world, seed: int, n: int) -> np.ndarray:
    """선형-가우시안 1스텝: 파티클 평균이 칼만 평균 ±3σ/√ESS 안인지 (좌표별)"""
    models = WorldModels.from_config(world)
    rng = make_stream(seed, "filter-vs-kalman")
    prior = kalman_prior(world)
    action = models.action_vector(0)
    truth = prior.mean + world.sigma_0 * rng.standard_normal(world.dim)
    _, z = simulate_truth_step(truth, action, models, rng)
    posterior = kalman_step(prior, action, z, models)

    belief = ParticleBelief.from_gaussian(prior.mean, world.sigma_0, n, make_stream(seed, "prior"))
    belief = propagate_and_reweight(belief, action, z, models.transition, models.sensor, make_stream(seed, "filter"))
    sigma = np.sqrt(np.diag(posterior.covariance))
    tol = 3.0 * sigma / math.sqrt(effective_sample_size(belief))
    return np.abs(belief.mean() - posterior.mean) <= tol


def test_particle_filter_matches_kalman_posterior(linear_world):
    hits = np.concatenate([_filter_matches_kalman(linear_world, seed, 1000) for seed in range(10)])
    assert hits.sum() >= 18


@pytest.mark.slow
def test_particle_filter_matches_kalman_posterior_many_runs(linear_world):
    hits = np.concatenate([_filter_matches_kalman(linear_world, seed, 1000) for seed in range(500)])
    assert hits.mean() >= 0.97


def test_make_stream_is_reproducible_and_label_sensitive():
    a = make_stream(7, "simplify", 3).random(4)
    b = make_stream(7, "simplify", 3).random(4)
    c = make_stream(7, "simplify", 4).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# ========== 단순화 ==========

def test_schedule_validation():
    with pytest.raises(SimplificationLevelError):
        SimplificationSchedule((0.1, 0.5))
    with pytest.raises(SimplificationLevelError):
        SimplificationSchedule((0.5, 0.2, 1.0))
    with pytest.raises(SimplificationLevelError):
        SimplificationSchedule(())


def test_particle_counts_follow_schedule():
    schedule = SimplificationSchedule()
    assert [schedule.particle_count(s, 50) for s in range(5)] == [5, 10, 20, 40, 50]
    assert schedule.particle_count(0, 3) == 1


def test_simplify_size_and_level():
    schedule = SimplificationSchedule()
    belief = _random_belief(2, 50)
    view = simplify(belief, schedule, 1, make_stream(0, "s"))
    assert view.size == 10
    assert view.level == 1
    assert view.fraction == 0.2
    assert len(set(view.indices.tolist())) == 10


def test_simplify_rejects_bad_level():
    with pytest.raises(SimplificationLevelError):
        simplify(_random_belief(0), SimplificationSchedule(), 5, make_stream(0, "s"))


def test_simplify_is_deterministic():
    schedule = SimplificationSchedule()
    belief = _random_belief(3)
    a = simplify(belief, schedule, 0, make_stream(11, "s"))
    b = simplify(belief, schedule, 0, make_stream(11, "s"))
    assert np.array_equal(a.indices, b.indices)


def test_refine_is_nested_and_matches_direct_simplify():
    schedule = SimplificationSchedule()
    belief = _random_belief(4, 60)
    view = simplify(belief, schedule, 0, make_stream(9, "s"))
    once, added_1 = refine(view, belief, schedule)
    twice, added_2 = refine(once, belief, schedule)
    direct = simplify(belief, schedule, 2, make_stream(9, "s"))

    assert set(view.indices) <= set(once.indices) <= set(twice.indices)
    assert set(added_1) == set(once.indices) - set(view.indices)
    assert set(added_2) == set(twice.indices) - set(once.indices)
    assert np.array_equal(twice.indices, direct.indices)


def test_refine_to_finest_covers_everything():
    schedule = SimplificationSchedule()
    belief = _random_belief(5, 30)
    view = simplify(belief, schedule, 0, make_stream(0, "s"))
    while view.level < schedule.finest:
        view, _ = refine(view, belief, schedule)
    assert view.is_full(30)
    with pytest.raises(SimplificationLevelError):
        refine(view, belief, schedule)


def test_simplify_prefers_heavy_particles():
    schedule = SimplificationSchedule((0.1, 1.0))
    weights = np.full(100, 1e-12)
    weights[:10] = 1.0
    belief = ParticleBelief(np.zeros((100, 2)), weights)
    view = simplify(belief, schedule, 0, make_stream(0, "s"))
    assert set(view.indices) == set(range(10))


def test_view_weights_and_export():
    schedule = SimplificationSchedule()
    belief = _random_belief(6, 20)
    view = simplify(belief, schedule, 1, make_stream(0, "s"))
    raw = view_weights(view, belief)
    exported = view_as_belief(view, belief)
    assert raw == pytest.approx(belief.weights[view.indices])
    assert exported.weights == pytest.approx(raw / raw.sum())
    assert exported.size == view.size


def test_full_view():
    belief = _random_belief(7, 12)
    view = full_view(belief, SimplificationSchedule())
    assert view.is_full(12)
    assert view.level == 4
    assert math.isclose(view_weights(view, belief).sum(), 1.0)
