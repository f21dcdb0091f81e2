import numpy as np
import pytest

from aggbne.aggregation import brute_force_aggregate
from aggbne.exceptions import ConfigurationError, NumericalError
from aggbne.game import ActionBox, CournotCost, CournotParams, GameSpec, cournot_game
from aggbne.type_space import TypeInterval, build_uniform_grid
from aggbne.verification import (
    best_response,
    best_response_refinement_check,
    central_dbne,
    epsilon_study,
    expected_cost,
    exploitability,
    minimize_conditional_generic,
    refine_strategy,
    write_study_csv,
)


def test_zero_profile_costs_nothing(small_game):
    U, EU = expected_cost(0, np.zeros((3, 4, 1)), small_game.discretization, small_game.cost_models[0])
    np.testing.assert_array_equal(U, 0.0)
    assert EU == 0.0


def test_single_type_reduces_to_deterministic_cost():
    spec = cournot_game(n_players=2, N=1)
    disc = spec.discretization
    prof = np.array([[[3.0]], [[5.0]]])
    model = spec.cost_models[0]
    _, EU = expected_cost(0, prof, disc, model)
    assert EU == pytest.approx(float(model.cost(np.array([3.0]), np.array([4.0]), disc.theta[0])))


def test_expected_cost_matches_monte_carlo():
    spec = cournot_game(n_players=3, N=5)
    disc = spec.discretization
    rng = np.random.default_rng(7)
    prof = rng.uniform(0, 20, size=(3, 5, 1))
    i, model = 1, spec.cost_models[1]
    rivals = prof.copy()
    rivals[i] = 0.0
    rival_agg = brute_force_aggregate(rivals, disc.grid)[:, 0]
    samples = 10**6
    theta = rng.uniform(1.0, 2.0, size=(samples, 3))
    idx = disc.grid.cell_index(theta)
    s = idx.sum(axis=1)  # zero-based index sum
    own = prof[i, idx[:, i], 0]
    agg = own / 3 + rival_agg[s]
    costs = model.cost(own[:, None], agg[:, None], disc.theta[idx[:, i]])
    _, EU = expected_cost(i, prof, disc, model)
    se = costs.std() / np.sqrt(samples)
    assert abs(costs.mean() - EU) <= 3 * se


def test_best_response_clamps_at_box():
    spec = cournot_game(n_players=5, N=3, d=1200.0, types=(1.0, 2.0))
    br = best_response(0, np.zeros((5, 3, 1)), spec.discretization, spec.cost_models[0], spec.box)
    np.testing.assert_array_equal(br, 20.0)


def test_best_response_closed_form_value():
    # single type point theta = 1, rivals zero, d = 10: x = 10 / (2 (1 + 1/5))
    spec = cournot_game(n_players=5, N=1, d=10.0, types=(0.0, 1.0))
    br = best_response(0, np.zeros((5, 1, 1)), spec.discretization, spec.cost_models[0], spec.box)
    assert br[0, 0] == pytest.approx(10 / 2.4)


@pytest.mark.parametrize("seed", range(5))
def test_generic_best_response_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    spec = cournot_game(n_players=3, N=6, d=float(rng.uniform(20, 120)))
    prof = rng.uniform(0, 20, size=(3, 6, 1))
    model = spec.cost_models[2]
    disc = spec.discretization
    closed = best_response(2, prof, disc, model, spec.box, method="closed")
    generic = best_response(2, prof, disc, model, spec.box, method="generic")
    np.testing.assert_allclose(generic, closed, atol=1e-8)


def test_best_response_is_idempotent(small_game):
    disc = small_game.discretization
    rng = np.random.default_rng(0)
    prof = rng.uniform(0, 20, size=(3, 4, 1))
    model = small_game.cost_models[0]
    br = best_response(0, prof, disc, model, small_game.box)
    prof[0] = br
    np.testing.assert_allclose(best_response(0, prof, disc, model, small_game.box), br, atol=1e-12)


def test_generic_best_response_nonaffine(softplus_game):
    disc = softplus_game.discretization
    prof = np.full((3, 4, 1), 1.0)
    model = softplus_game.cost_models[0]
    br = best_response(0, prof, disc, model, softplus_game.box)
    prof[0] = br
    base = expected_cost(0, prof, disc, model)[0]
    for delta in (-1e-3, 1e-3):
        moved = prof.copy()
        moved[0] = softplus_game.box.project(br + delta)
        assert np.all(expected_cost(0, moved, disc, model)[0] >= base - 1e-12)


def test_closed_method_requires_closed_form(softplus_game):
    disc = softplus_game.discretization
    with pytest.raises(ConfigurationError):
        best_response(0, np.ones((3, 4, 1)), disc, softplus_game.cost_models[0], softplus_game.box, method="closed")


def test_generic_minimizer_iteration_cap(softplus_game):
    disc = softplus_game.discretization
    rival = np.ones((disc.S, 1))
    with pytest.raises(NumericalError):
        minimize_conditional_generic(
            softplus_game.cost_models[0], disc.sum_given_own, rival, disc.theta, 3, softplus_game.box, tol=1e-15, max_iter=1
        )


def test_exploitability_signs(small_game):
    disc = small_game.discretization
    assert exploitability(np.zeros((3, 4, 1)), disc, small_game).epsilon > 0
    eq = central_dbne(small_game, disc).profile
    rep = exploitability(eq, disc, small_game)
    assert rep.epsilon <= 1e-8
    assert np.all(rep.gains >= -1e-9)
    perturbed = eq.copy()
    perturbed[1, 2] = small_game.box.project(eq[1, 2] - 0.5)
    assert exploitability(perturbed, disc, small_game).gains[1] > 0


def test_central_dbne_symmetric_game():
    params = CournotParams(d=30.0, delta_step=0.0, sign=-1)
    spec = GameSpec(
        2, ActionBox.interval(0, 20), (CournotCost(params, 1), CournotCost(params, 2)), TypeInterval.uniform(1, 2), 5, True
    )
    res = central_dbne(spec)
    np.testing.assert_allclose(res.profile[0], res.profile[1], atol=1e-8)


def test_central_dbne_unique_across_restarts():
    spec = cournot_game(N=10)
    ref = central_dbne(spec, init="midpoint").profile
    for seed in range(5):
        other = central_dbne(spec, init="random", seed=seed).profile
        assert np.abs(other - ref).max() <= 1e-6


def test_central_dbne_iteration_cap(small_game):
    with pytest.raises(NumericalError, match="exploitability"):
        central_dbne(small_game, max_iter=3)


def test_central_dbne_nonaffine(softplus_game):
    res = central_dbne(softplus_game)
    assert res.certificate.epsilon <= 1e-8


def test_refine_strategy():
    coarse, fine = build_uniform_grid(0.0, 1.0, 2), build_uniform_grid(0.0, 1.0, 4)
    np.testing.assert_array_equal(refine_strategy([[1.0], [2.0]], coarse, fine), [[1.0], [1.0], [2.0], [2.0]])
    np.testing.assert_array_equal(refine_strategy([[3.0], [4.0]], coarse, coarse), [[3.0], [4.0]])
    with pytest.raises(IndexError):
        refine_strategy([[1.0], [2.0]], coarse, build_uniform_grid(0.0, 2.0, 4))


def test_epsilon_study_self_consistency(tmp_path):
    spec = cournot_game(n_players=3)
    rows = epsilon_study(spec, [8, 4], 8)
    assert [r.N for r in rows] == [4, 8]
    assert rows[1].epsilon <= 1e-8
    write_study_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "N,epsilon,certified_tol,runtime_ms"
    with pytest.raises(ConfigurationError):
        epsilon_study(spec, [3], 8)


def test_refinement_check_at_fine_grid():
    spec = cournot_game(n_players=3)
    rivals = central_dbne(spec.with_N(8)).profile
    (_, gap), = best_response_refinement_check(spec, rivals, [8], 8)
    assert gap <= 1e-12


def test_refinement_gap_for_constant_rivals():
    spec = cournot_game(n_players=3)
    rivals = np.full((3, 16, 1), 5.0)
    rows = best_response_refinement_check(spec, rivals, [2, 4, 8], 16)
    # closed form has d x*/d theta bounded by |intercept + a| / (2 (1 + 1/n)^2)
    lip = (100.0 + 20.0) / (2 * (1 + 1 / 3) ** 2)
    for N, gap in rows:
        assert gap <= lip * (1.0 / N) + 1e-12


@pytest.mark.parametrize("sign,corner", [(1, 0.0), (-1, 20.0)])
def test_high_base_price_gives_corner_equilibrium(sign, corner):
    # with d = 1200 every best response leaves the box, so the study is flat
    from aggbne.game import saturated_cournot_game

    spec = saturated_cournot_game(sign=sign)
    np.testing.assert_array_equal(central_dbne(spec).profile, corner)
    assert all(r.epsilon == 0.0 for r in epsilon_study(spec, [10, 20], 40))
