import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aggbne.aggregation import contributions, full_aggregate
from aggbne.exceptions import ConfigurationError, DivergenceError, ShapeError
from aggbne.game import ActionBox, cournot_game
from aggbne.network import GraphSchedule, schedule_at
from aggbne.solver import (
    StepOptions,
    StepsizeSchedule,
    bayes_gradient,
    init_state,
    mix_estimates,
    project_box,
    run,
    step,
)
from aggbne.verification import central_dbne, expected_cost

from conftest import SoftplusCost


def test_project_box():
    box = ActionBox.interval(0.0, 20.0)
    np.testing.assert_array_equal(project_box(np.array([[-3.0], [5.0], [25.0]]), box), [[0.0], [5.0], [20.0]])


@given(arrays(float, (6, 1), elements=st.floats(-100, 100)), arrays(float, (6, 1), elements=st.floats(-100, 100)))
@settings(max_examples=50, deadline=None)
def test_projection_idempotent_and_nonexpansive(x, y):
    box = ActionBox.interval(0.0, 20.0)
    px, py = project_box(x, box), project_box(y, box)
    np.testing.assert_array_equal(project_box(px, box), px)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


def test_stepsize_schedule():
    s = StepsizeSchedule()
    assert s(0) == pytest.approx(0.2)
    assert all(s(t + 1) <= s(t) for t in range(100))
    assert StepsizeSchedule(table=(0.5, 0.25))(1) == 0.25
    with pytest.raises(ConfigurationError):
        StepsizeSchedule(table=(0.1, 0.2))
    with pytest.raises(ConfigurationError):
        StepsizeSchedule(a=-1.0)


@pytest.mark.parametrize("rule", ["zeros", "midpoint", "random"])
def test_init_rules(rule):
    spec = cournot_game(n_players=3, N=4)
    state = init_state(spec, spec.discretization, rule, seed=5)
    np.testing.assert_allclose(state.estimates, contributions(state.strategies, spec.discretization))
    if rule == "midpoint":
        np.testing.assert_allclose(state.estimates, 10.0 / 3)
    if rule == "zeros":
        assert not state.estimates.any()
    again = init_state(spec, spec.discretization, rule, seed=5)
    np.testing.assert_array_equal(state.strategies, again.strategies)


def test_init_rejects_unknown_or_infeasible():
    spec = cournot_game(n_players=2, N=3, box=(1.0, 2.0))
    with pytest.raises(ConfigurationError):
        init_state(spec, spec.discretization, "zeros")
    with pytest.raises(ConfigurationError):
        init_state(spec, spec.discretization, "spiral")


def test_mix_estimates():
    v = np.stack([np.zeros((3, 1)), np.full((3, 1), 2.0)])
    np.testing.assert_allclose(mix_estimates(v, np.full((2, 2), 0.5)), 1.0)
    np.testing.assert_array_equal(mix_estimates(v, np.eye(2)), v)
    with pytest.raises(ShapeError):
        mix_estimates(v, np.eye(3))


def test_bayes_gradient_hand_value():
    spec = cournot_game(n_players=5, N=4, sign=1, d=1200.0)
    disc = spec.discretization
    u = np.full((disc.S, 1), 3.0)
    g = bayes_gradient(np.zeros((4, 1)), u, disc, spec.cost_models[0], hold_own=False)
    np.testing.assert_allclose(g, (3.0 + 1200.0) / 4)


def _fd_check(spec, rng, probes):
    disc = spec.discretization
    worst = 0.0
    for _ in range(probes):
        prof = rng.uniform(spec.box.lo, spec.box.hi, size=(spec.n_players, disc.N, 1))
        i, k = rng.integers(spec.n_players), rng.integers(disc.N)
        model = spec.cost_models[i]
        g = bayes_gradient(prof[i], full_aggregate(prof, disc), disc, model, normalize=False)
        h = 1e-5
        up, dn = prof.copy(), prof.copy()
        up[i, k, 0] += h
        dn[i, k, 0] -= h
        fd = (expected_cost(i, up, disc, model)[0][k] - expected_cost(i, dn, disc, model)[0][k]) / (2 * h)
        worst = max(worst, abs(g[k, 0] - fd) / max(abs(fd), 1.0))
    return worst


def test_gradient_matches_finite_differences_nonaffine(softplus_game):
    assert _fd_check(softplus_game, np.random.default_rng(0), 30) < 1e-6


def test_normalize_divides_by_N(small_game):
    disc = small_game.discretization
    sigma = np.full((4, 1), 2.0)
    u = np.full((disc.S, 1), 1.0)
    model = small_game.cost_models[0]
    np.testing.assert_allclose(
        bayes_gradient(sigma, u, disc, model), bayes_gradient(sigma, u, disc, model, normalize=False) / 4
    )


def test_chain_flag_drops_aggregate_term(small_game):
    disc = small_game.discretization
    sigma = np.full((4, 1), 2.0)
    u = np.full((disc.S, 1), 1.0)
    model = small_game.cost_models[0]
    on = bayes_gradient(sigma, u, disc, model, hold_own=False)
    off = bayes_gradient(sigma, u, disc, model, hold_own=False, include_chain=False)
    np.testing.assert_allclose(on - off, 2.0 / 3 / 4)


def test_zero_stepsize_is_pure_consensus(small_game):
    disc = small_game.discretization
    state = init_state(small_game, disc, "random", seed=1)
    W = schedule_at(GraphSchedule(3, "ring-static"), 0)
    new = step(state, small_game, disc, W, 0.0)
    np.testing.assert_array_equal(new.strategies, state.strategies)
    np.testing.assert_allclose(new.estimates, mix_estimates(state.estimates, W), atol=1e-15)


@pytest.mark.parametrize("mode", ["ring-static", "random-gossip"])
def test_conservation_after_steps(small_game, mode):
    disc = small_game.discretization
    state = init_state(small_game, disc, "random", seed=2)
    schedule = GraphSchedule(3, mode, seed=4)
    for t in range(50):
        state = step(state, small_game, disc, schedule_at(schedule, t), StepsizeSchedule()(t))
        assert state.conservation_error() <= 1e-10
    assert small_game.box.contains(state.strategies)


def test_oracle_is_fixed_point(small_game):
    disc = small_game.discretization
    oracle = central_dbne(small_game, disc, tol=1e-10).profile
    state = init_state(small_game, disc, oracle)
    alpha = 0.1
    new = step(state, small_game, disc, np.full((3, 3), 1 / 3), alpha)
    assert np.abs(new.strategies - oracle).max() <= 1e-8 * alpha


def test_divergence_is_reported(small_game):
    disc = small_game.discretization
    state = init_state(small_game, disc)
    state.estimates[0, 0, 0] = np.nan
    with pytest.raises(DivergenceError) as info:
        step(state, small_game, disc, np.eye(3), 0.1)
    assert info.value.iteration == 0


def test_run_records_and_csv(small_game, tmp_path):
    res = run(small_game, GraphSchedule(3), StepsizeSchedule(), 250, record_every=100, probes=[(1, 1), (3, 4)])
    assert list(res.trace.column("t")) == [0, 100, 200, 250]
    assert res.trace.columns[-2:] == ["probe_1_1", "probe_3_4"]
    assert np.isnan(res.trace.column("oracle_distance")).all()
    res.trace.to_csv(tmp_path / "t.csv")
    header, first = (tmp_path / "t.csv").read_text().splitlines()[:2]
    assert header == "t,consensus_residual,oracle_distance,stepsize,probe_1_1,probe_3_4"
    assert first.startswith("0,")


def test_run_zero_iterations(small_game):
    res = run(small_game, GraphSchedule(3), StepsizeSchedule(), 0)
    assert len(res.trace) == 1


def test_run_rejects_bad_probe(small_game):
    with pytest.raises(ConfigurationError):
        run(small_game, GraphSchedule(3), StepsizeSchedule(), 1, probes=[(4, 1)])


def test_unscaled_estimate_misses_the_equilibrium(small_game):
    disc = small_game.discretization
    oracle = central_dbne(small_game, disc).profile
    opts = StepOptions(rescale=False)
    res = run(small_game, GraphSchedule(3), StepsizeSchedule(), 3000, oracle=oracle, record_every=3000, options=opts)
    assert res.trace.column("oracle_distance")[-1] > 1.0


def test_parallel_matches_serial(small_game):
    a = run(small_game, GraphSchedule(3, "ring-static"), StepsizeSchedule(), 300, record_every=50)
    b = run(small_game, GraphSchedule(3, "ring-static"), StepsizeSchedule(), 300, record_every=50, n_jobs=3)
    np.testing.assert_array_equal(a.trace.to_array(), b.trace.to_array())
