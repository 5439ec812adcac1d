import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixagent.core import TrajectoryRecord, project_to_fields, validate_distribution
from mixagent.errors import ConfigError, DegenerateDesign, EmptyPartition, TooFewSamples
from mixagent.orchestrator import (
    FIELDS_SPACE,
    GuidedRunConfig,
    agent_policy,
    analyze_trajectories,
    field_balanced,
    fit_linear,
    fixed_policy,
    grid_argmax,
    guide_training,
    maximize_on_simplex,
    read_report,
    regmix_fit,
    run_baseline,
    write_report,
)
from mixagent.orchestrator.regmix import project_simplex
from mixagent.sampler import target_samples_covered


def _cfg(**kw):
    base = dict(max_steps=6, samples_per_step=256, target_pool=10**9, seed=1)
    base.update(kw)
    return GuidedRunConfig(**base)


def _run(env, policy, **kw):
    return guide_training(policy, env.corpora, env.eval_sets, env.base, _cfg(**kw))


# guided loop

def test_empty_target_pool_stops_after_one_step(tiny_env):
    rep = _run(tiny_env, fixed_policy(tiny_env.start), target_pool=0)
    assert rep.steps == 1 and rep.early_stop == 1
    assert rep.feedback.shape[0] == 2


def test_stub_returning_start_gives_constant_trajectory(tiny_env):
    rep = _run(tiny_env, lambda dists, z: dists[0])
    assert np.all(rep.actions == tiny_env.start)
    m = rep.masses()
    assert np.all(m == m[0])


def test_report_invariants(tiny_env):
    rng = np.random.default_rng(0)
    n = tiny_env.space.n
    rep = _run(tiny_env, lambda dists, z: rng.dirichlet(np.ones(n)), target_pool=600)
    for a in rep.actions:
        validate_distribution(a, n)
    assert rep.feedback.shape[0] == rep.steps + 1
    assert np.all(np.diff(rep.coverage) >= 0)
    first = next(i for i, c in enumerate(rep.coverage) if c >= 600)
    assert rep.early_stop == first + 1 == rep.steps
    want = np.cumsum([target_samples_covered(a, 256, tiny_env.space) for a in rep.actions])
    assert rep.coverage == want.tolist()


def test_policy_sees_running_standardized_feedback(tiny_env):
    seen = []

    def policy(dists, z):
        seen.append(z.copy())
        return dists[-1]

    _run(tiny_env, policy, max_steps=3)
    assert np.all(seen[0] == 0.0)  # single-row fallback
    for z in seen[1:]:
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)


def test_run_deterministic(tiny_env):
    a = _run(tiny_env, fixed_policy(tiny_env.start))
    b = _run(tiny_env, fixed_policy(tiny_env.start))
    assert a.digest() == b.digest()
    c = guide_training(fixed_policy(tiny_env.start), tiny_env.corpora, tiny_env.eval_sets, tiny_env.base,
                       _cfg(seed=2))
    assert c.digest() != a.digest()


def test_fields_mode_projects_and_spreads(tiny_env):
    env = tiny_env
    rng = np.random.default_rng(3)
    n = env.space.n
    rep = guide_training(lambda d, z: rng.dirichlet(np.ones(n)), env.corpora, env.eval_sets, env.base,
                         _cfg(space="fields", max_steps=3))
    assert rep.space == FIELDS_SPACE and rep.actions.shape == (3, 2)
    for two, native in zip(rep.actions, rep.sampled):
        np.testing.assert_allclose(project_to_fields(native, env.space).weights, two, atol=1e-12)
        src = native[env.space.source_mask]
        if two[0] > 0:
            np.testing.assert_allclose(src / src.sum(), env.corpora.source_mix, atol=1e-12)


def test_agent_policy_wraps_callable(tiny_env):
    n = tiny_env.space.n
    rep = _run(tiny_env, agent_policy(lambda hs: np.tile(np.full(n, 1.0 / n), (len(hs), 1))), max_steps=2)
    assert np.allclose(rep.actions, 1.0 / n)


def test_config_validation():
    with pytest.raises(ConfigError):
        GuidedRunConfig(max_steps=0)
    with pytest.raises(ConfigError):
        GuidedRunConfig(samples_per_step=0)


# baselines

def test_naive_has_no_source_mass_and_forgets(tiny_env):
    rep = run_baseline("naive", tiny_env.corpora, tiny_env.eval_sets, tiny_env.base, _cfg(max_steps=10))
    assert np.all(rep.masses()[1:, 0] == 0.0)
    assert rep.source_samples[-1] == 0
    general, target = 0, 1
    assert rep.final[target] > rep.feedback[0, target]
    assert rep.final[general] < rep.feedback[0, general]


def test_static_start_keeps_masses(tiny_env):
    rep = run_baseline("static", tiny_env.corpora, tiny_env.eval_sets, tiny_env.base, _cfg(), tiny_env.start)
    m = rep.masses()
    assert np.all(m == m[0])
    with pytest.raises(ConfigError):
        run_baseline("static", tiny_env.corpora, tiny_env.eval_sets, tiny_env.base, _cfg())


def test_field_balanced(tiny_env):
    d = field_balanced(tiny_env.corpora, 0.3)
    validate_distribution(d, tiny_env.space.n)
    assert project_to_fields(d, tiny_env.space).weights == pytest.approx([0.7, 0.3])


# report files

def test_report_directory_roundtrip(tiny_env, tmp_path):
    rep = _run(tiny_env, fixed_policy(tiny_env.start), max_steps=3)
    h1 = write_report(tmp_path / "a", rep, tiny_env.eval_sets.names, seed=1)
    h2 = write_report(tmp_path / "b", rep, tiny_env.eval_sets.names, seed=1)
    assert h1 == h2 and set(h1) == {"trajectory.jsonl", "series.csv", "learner.json", "summary.json"}
    back = read_report(tmp_path / "a")
    np.testing.assert_array_equal(back["final"], rep.final)
    assert len(back["series"]) == rep.steps + 1
    assert back["summary"]["report_hash"] == rep.digest()


# regression baseline

def test_regmix_linear_vertex_against_grid():
    rng = np.random.default_rng(0)
    n = 4
    w = np.array([1.0, 0, 0, 0])
    x = rng.dirichlet(np.ones(n), size=30)
    fit = regmix_fit(x, x @ w)
    grid = grid_argmax(fit.objective)
    assert np.abs(fit.mixture - grid).sum() <= 0.05
    assert np.abs(fit.mixture - np.eye(n)[0]).sum() <= 0.05


def test_regmix_constant_scores_give_uniform():
    x = np.random.default_rng(1).dirichlet(np.ones(3), size=10)
    fit = regmix_fit(x, np.full(10, -2.5))
    np.testing.assert_array_equal(fit.mixture, np.full(3, 1 / 3))


def test_least_squares_matches_normal_equations():
    rng = np.random.default_rng(2)
    x = rng.dirichlet(np.ones(5), size=40)
    y = rng.normal(size=(40, 2))
    oracle = np.linalg.solve(x.T @ x, x.T @ y)
    np.testing.assert_allclose(fit_linear(x, y), oracle, rtol=0, atol=1e-8)


def test_regmix_errors():
    with pytest.raises(TooFewSamples):
        fit_linear(np.full((3, 3), 1 / 3), np.zeros(3))
    x = np.tile([[0.5, 0.5, 0.0]], (6, 1))
    with pytest.raises(DegenerateDesign):
        fit_linear(x, np.zeros(6))


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5))
def test_simplex_argmax_matches_grid_value(c):
    c = np.array(c)
    w = maximize_on_simplex(c)
    validate_distribution(w, c.shape[0])
    assert c @ w >= c @ grid_argmax(c, 10) - 1e-9


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_projection_onto_simplex(v):
    p = project_simplex(np.array(v))
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)


# step analysis

def _rec(actions, scores):
    acts = np.array(actions, dtype=float)
    start = np.full(acts.shape[1], 1.0 / acts.shape[1])
    return TrajectoryRecord(start, acts, np.array(scores, dtype=float).reshape(-1, 1))


def test_analysis_single_partition_and_mean():
    p, q = [0.2, 0.8], [0.6, 0.4]
    res = analyze_trajectories([_rec([p, q], [0, 1, 2])], 0)
    np.testing.assert_allclose(res.increase, [0.4, 0.6])
    assert res.decrease is None and res.n_decrease == 0
    with pytest.raises(EmptyPartition):
        res.require("decrease")


def test_analysis_zero_delta_goes_nowhere():
    res = analyze_trajectories([_rec([[1, 0], [0, 1], [0.5, 0.5]], [0, 0, 1, 0.5])], 0)
    assert (res.n_increase, res.n_decrease, res.n_zero) == (1, 1, 1)
    np.testing.assert_array_equal(res.increase, [0, 1])
    np.testing.assert_array_equal(res.decrease, [0.5, 0.5])


def test_analysis_planted_rule():
    rng = np.random.default_rng(4)
    trajs = []
    for _ in range(20):
        acts = rng.dirichlet(np.ones(4), size=6)
        tm = acts[:, 2:].sum(1)
        delta = np.where(tm > 0.5, 1.0, -1.0) * rng.uniform(0.1, 1, size=6)
        trajs.append(_rec(acts, np.concatenate([[0.0], np.cumsum(delta)])))
    res = analyze_trajectories(trajs, 0)
    assert res.increase[2:].sum() > res.decrease[2:].sum()
    validate_distribution(res.increase, 4)
    validate_distribution(res.decrease, 4)


def test_guided_report_reused_for_analysis(tiny_env):
    rep = _run(tiny_env, fixed_policy(tiny_env.start), max_steps=3)
    traj = TrajectoryRecord(rep.start, rep.actions, rep.feedback)
    res = analyze_trajectories([traj], 1)
    assert res.n_increase + res.n_decrease + res.n_zero == 3


def test_dataclass_replace_keeps_space_mode():
    cfg = dataclasses.replace(_cfg(), space="fields")
    assert cfg.space.value == "fields"
