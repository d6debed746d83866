import math

import numpy as np
import pytest

from frechetlab.bandit_lab import (
    ArmSpec,
    ArmStatistics,
    BanditEnv,
    ClassicalUcb,
    FixedArm,
    FrechetUcb,
    FrechetUcbConfig,
    UniformRandom,
    arm_distance,
    belief_distances_sq,
    classical_ucb_step,
    frechet_belief,
    frechet_ucb_scores,
    frechet_ucb_step,
    make_reference_env,
    make_ppp_env,
    regret_bound_decomposition,
    reward_tape,
    run_policy,
    ucb_index,
    ucb_pull_bound,
)
from frechetlab.gaussian_manifold import MetricKind, fisher_rao_univariate_sq
from frechetlab.rng import StreamFactory, substream
from frechetlab.spatial_field import PppConfig, Window


def stats_1d(means, variances, pulls):
    return ArmStatistics.from_arrays(pulls, means, variances)


def test_reference_env_layout():
    env = make_reference_env()
    assert env.n_arms == 10
    assert (env.arms[0].mean, env.arms[0].variance) == (0.87, 2.25)
    assert env.best_arm == 2 and env.means[2] == pytest.approx(0.90)
    assert env.gaps[6] == pytest.approx(0.15)
    assert np.all(env.variances[3:] == 0.01)


def test_env_validation_and_shift():
    with pytest.raises(ValueError):
        BanditEnv([ArmSpec(0.0, 1.0)], 10)
    with pytest.raises(ValueError):
        ArmSpec(0.0, 0.0)
    env = make_reference_env(100)
    assert np.allclose(env.shifted(1.0).gaps, env.gaps)


def test_ppp_env():
    env = make_ppp_env(PppConfig(1.0, Window(2.0)), lambda p: p[0], lambda p: 1.0 + p[1] ** 2, substream(0), 50)
    assert env.locations.shape == (env.n_arms, 2)
    assert np.allclose(env.means, env.locations[:, 0])


def test_welford_matches_numpy():
    rng = np.random.default_rng(0)
    s = ArmStatistics(3)
    rewards = {k: [] for k in range(3)}
    for _ in range(200):
        k = int(rng.integers(3))
        r = rng.normal(k, k + 1)
        rewards[k].append(r)
        s.update(k, r)
    for k in range(3):
        assert s.pulls[k] == len(rewards[k])
        assert s.empirical_mean[k] == pytest.approx(np.mean(rewards[k]))
        assert s.empirical_var[k] == pytest.approx(np.var(rewards[k], ddof=1))


def test_ucb_index_and_ties():
    s = stats_1d([0.5, 0.1], [1.0, 1.0], [2, 2])
    assert ucb_index(s, math.e**2)[0] == pytest.approx(0.5 + math.sqrt(2), abs=1e-5)
    tie = stats_1d([0.3, 0.3], [1.0, 1.0], [4, 4])
    assert classical_ucb_step(tie, 10) == 0
    fresh = stats_1d([0.9, 0.0, 0.0], [1.0, 0.0, 0.0], [5, 0, 0])
    assert classical_ucb_step(fresh, 6) == 1


def test_frechet_belief():
    s = stats_1d([0.0, 10.0], [1.0, 4.0], [5, 5])
    cfg = FrechetUcbConfig()
    assert frechet_belief(s, cfg).mean[0] == pytest.approx(2.0)
    s = stats_1d([1.0, 3.0, 5.0], [2.0, 2.0, 2.0], [5, 5, 5])
    assert frechet_belief(s, cfg).mean[0] == pytest.approx(3.0)
    s = stats_1d([1.0, 50.0], [0.0, 1.0], [5, 5])
    assert frechet_belief(s, cfg).mean[0] == pytest.approx(1.0, abs=1e-3)


def test_belief_distances_match_closed_forms():
    s = stats_1d([0.0, 2.0, 1.0], [1.0, 4.0, 0.25], [5, 5, 5])
    fr = FrechetUcbConfig(metric="fisher_rao")
    w2 = FrechetUcbConfig(metric="w2")
    belief = frechet_belief(s, w2)
    mf, vf = belief.mean[0], belief.cov.entries[0, 0]
    expected_w2 = (s.empirical_mean - mf) ** 2 + (np.sqrt(s.empirical_var) - np.sqrt(vf)) ** 2
    assert np.allclose(belief_distances_sq(s, w2), expected_w2)
    assert np.allclose(belief_distances_sq(s, fr), fisher_rao_univariate_sq(s.empirical_mean, s.empirical_var, mf, vf))


def test_frechet_ucb_limits():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = stats_1d(rng.normal(size=5), rng.uniform(0.1, 3, size=5), rng.integers(2, 50, size=5))
        t = 300
        big = FrechetUcbConfig(eps=np.inf, beta=1e12)
        assert frechet_ucb_step(s, big, t) == classical_ucb_step(s, t)
        near = FrechetUcbConfig(eps=np.inf, beta=0.0)
        assert frechet_ucb_step(s, near, t) == int(np.argmin(belief_distances_sq(s, near)))


def test_frechet_ucb_neighbourhood_and_fallback():
    s = stats_1d([0.0, 0.05, 5.0], [0.01, 0.01, 1.0], [10, 10, 10])
    cfg = FrechetUcbConfig(eps=0.5, beta=1.0)
    scores = frechet_ucb_scores(s, cfg, 100)
    d = np.sqrt(belief_distances_sq(s, cfg))
    assert np.array_equal(d > 0.5, [False, False, True])
    assert np.isinf(scores[2]) and np.all(np.isfinite(scores[:2]))
    tiny = FrechetUcbConfig(eps=1e-9, beta=1.0)
    assert np.all(np.isfinite(frechet_ucb_scores(s, tiny, 100)))


def test_adaptive_radius_warmup():
    cfg = FrechetUcbConfig()
    d = np.array([[0.1, 0.2, 0.9]])
    assert np.isinf(cfg.radius(d, 6, 3)).all()
    assert cfg.radius(d, 7, 3)[0] == pytest.approx(2 * np.std(d, ddof=1))


def test_config_validation():
    with pytest.raises(ValueError):
        FrechetUcbConfig(metric="affine_invariant")
    with pytest.raises(ValueError):
        FrechetUcbConfig(eps=0.0)
    with pytest.raises(ValueError):
        FrechetUcbConfig(beta=-1.0)
    assert FrechetUcbConfig(beta=lambda t: 2.0).beta(5) == 2.0


def scalar_ucb_regret(env, tape_i):
    """Straight-line classical UCB on one trial's reward tape."""
    K, T = env.n_arms, env.horizon
    n = np.zeros(K, int)
    total = np.zeros(K)
    regret, path = 0.0, []
    for t in range(1, T + 1):
        if t <= K:
            k = t - 1
        else:
            k = int(np.argmax(total / n + np.sqrt(2 * math.log(t) / n)))
        r = env.arms[k].mean + math.sqrt(env.arms[k].variance) * tape_i[k, n[k]]
        n[k] += 1
        total[k] += r
        regret += env.gaps[k]
        path.append(regret)
    return np.array(path)


def test_vectorised_harness_matches_scalar_loop():
    env = make_reference_env(300)
    s = StreamFactory(3)
    tape = reward_tape(env, 4, s)
    trace = run_policy(env, ClassicalUcb(), 4, s, tape=tape)
    for i in range(4):
        assert np.allclose(trace.per_trial[i], scalar_ucb_regret(env, tape[i]), atol=1e-9)


def test_oracle_and_random_policies():
    env = make_reference_env(200)
    s = StreamFactory(4)
    oracle = run_policy(env, FixedArm(env.best_arm), 5, s)
    # rounds 1..K are the fixed round-robin
    assert np.all(np.diff(oracle.per_trial[:, env.n_arms:], axis=1) == 0)
    rand = run_policy(env, UniformRandom(), 5, s)
    assert rand.final()[0] > oracle.final()[0]


def test_common_random_numbers_across_policies():
    env = make_reference_env(100)
    s = StreamFactory(5)
    a = run_policy(env, FrechetUcb(), 3, s)
    b = run_policy(env, FrechetUcb(), 3, s, tape=reward_tape(env, 3, s))
    assert np.array_equal(a.choices, b.choices)


def test_trace_helpers():
    env = make_reference_env(50)
    tr = run_policy(env, ClassicalUcb(), 3, StreamFactory(6))
    counts = tr.pull_counts(env.n_arms)
    assert counts.shape == (3, 10) and np.all(counts.sum(axis=1) == 50)
    assert np.all(tr.pulls_after(0, range(10)) == 50)
    rows = list(tr.rows())
    assert rows[0][0] == 1 and len(rows) == 50


def test_regret_bound_decomposition():
    env = make_reference_env()
    T = 3000
    inner, outer = regret_bound_decomposition(env, np.inf, T)
    hand = sum(8 * math.log(T) / g for g in env.gaps if g > 0)
    assert inner == pytest.approx(hand, abs=1e-9)
    assert outer == 0.0
    inner, outer = regret_bound_decomposition(env, 0.05, T, outside_rounds=10)
    near = [k for k in range(10) if arm_distance(env, k, env.best_arm) <= 0.05]
    assert set(near) == {0, 1, 2}
    assert inner == pytest.approx(8 * math.log(T) / env.gaps[0] + 8 * math.log(T) / env.gaps[1])
    assert outer == pytest.approx(sum(env.gaps[k] for k in range(10) if k not in near) * 10)
    _, spatial = regret_bound_decomposition(env, 0.05, T, intensity=0.1, excluded_area=2.0)
    assert spatial == pytest.approx(0.1 * 2.0 * env.gaps.max() * T)


def test_arm_distance_metrics():
    env = make_reference_env()
    assert arm_distance(env, 0, 3) == pytest.approx(math.hypot(0.87 - 0.72, 1.5 - 0.1))
    fr = arm_distance(env, 0, 3, MetricKind.FISHER_RAO)
    assert fr == pytest.approx(math.sqrt(fisher_rao_univariate_sq(0.87, 2.25, 0.72, 0.01)))


def test_ucb_pull_bound():
    assert ucb_pull_bound(0.5, 100) == pytest.approx(32 * math.log(100) + 1 + math.pi**2 / 3)
