import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggbne.exceptions import ConfigurationError, ValidationError
from aggbne.network import (
    GraphSchedule,
    check_weight_matrix,
    fit_geometric_envelope,
    metropolis_weights,
    mixing_diagnostic,
    schedule_at,
    transition_product,
    validate_schedule,
    write_weights_csv,
)


def test_metropolis_hand_examples():
    np.testing.assert_array_equal(metropolis_weights(2, [(0, 1)]), np.full((2, 2), 0.5))
    W = metropolis_weights(3, [(0, 1), (1, 2)])
    np.testing.assert_allclose(W, [[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]])
    np.testing.assert_array_equal(metropolis_weights(3, []), np.eye(3))


@given(st.integers(2, 8).flatmap(lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))))))
@settings(max_examples=80, deadline=None)
def test_metropolis_doubly_stochastic(args):
    n, edges = args
    W = metropolis_weights(n, edges)
    np.testing.assert_allclose(W, W.T)
    assert check_weight_matrix(W, 1.0 / n) is None


def test_complete_mode_is_exact_average():
    W = schedule_at(GraphSchedule(5, "complete"), 7)
    assert np.all(W == 0.2)


@pytest.mark.parametrize("mode", ["complete", "ring-static", "round-robin-edges", "random-gossip"])
def test_modes_pass_validation(mode):
    schedule = GraphSchedule(5, mode, seed=3)
    report = validate_schedule(schedule, 40)
    assert report.eta_empirical >= 1 / 5 - 1e-12
    assert report.windows_checked == 40 - schedule.window + 1


def test_ring_eta():
    assert validate_schedule(GraphSchedule(5, "ring-static"), 5).eta_empirical == pytest.approx(1 / 3)


def test_round_robin_three_nodes():
    s = GraphSchedule(3, "round-robin-edges")
    assert s.period == 2
    assert s.edges_at(0) == {(0, 1)} and s.edges_at(1) == {(1, 2)}
    validate_schedule(s, 10)


def test_schedule_is_deterministic():
    a = GraphSchedule(6, "random-gossip", seed=11)
    b = GraphSchedule(6, "random-gossip", seed=11)
    for t in range(20):
        np.testing.assert_array_equal(schedule_at(a, t), schedule_at(b, t))


def test_connectivity_violation_is_reported():
    edges = [(0, 1), (1, 2), (2, 3)]  # node 4 never connected
    with pytest.raises(ValidationError, match=r"window \[0, 0\]"):
        validate_schedule(GraphSchedule(5, "static", edge_sets=(edges,)), 3)


def test_transition_product_definition():
    s = GraphSchedule(4, "round-robin-edges")
    np.testing.assert_allclose(transition_product(s, 2, 3), schedule_at(s, 3) @ schedule_at(s, 2))
    with pytest.raises(ValueError):
        transition_product(s, 3, 3)
    phi = transition_product(GraphSchedule(3, "ring-static"), 0, 20)
    np.testing.assert_allclose(phi, 1 / 3, atol=1e-6)


def test_products_stay_doubly_stochastic():
    phi = transition_product(GraphSchedule(6, "random-gossip", seed=2), 0, 1000)
    np.testing.assert_allclose(phi.sum(axis=0), 1.0, atol=1e-10)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-10)


def test_mixing_diagnostic_envelope():
    dev = mixing_diagnostic(GraphSchedule(5, "round-robin-edges"), 0, 300)
    env = fit_geometric_envelope(dev)
    assert 0 < env.beta < 1
    assert env.covers(dev)


def test_disconnected_graph_does_not_mix():
    s = GraphSchedule(4, "static", edge_sets=([(0, 1), (2, 3)],))
    assert mixing_diagnostic(s, 0, 200)[-1] > 0.2


def test_bad_schedule_arguments():
    with pytest.raises(ConfigurationError):
        GraphSchedule(4, "hypercube")
    with pytest.raises(ConfigurationError):
        schedule_at(GraphSchedule(4), -1)
    with pytest.raises(ConfigurationError):
        validate_schedule(GraphSchedule(4, "round-robin-edges"), 2)


def test_weights_csv(tmp_path):
    path = tmp_path / "w.csv"
    write_weights_csv(GraphSchedule(3, "ring-static"), [0, 1], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,i,j,weight"
    assert len(lines) == 1 + 2 * 9


def test_envelope_ignores_rounding_floor():
    dev = np.concatenate([0.5 ** np.arange(1, 40), np.full(10, 3e-16)])
    env = fit_geometric_envelope(dev)
    assert env.beta == pytest.approx(0.5)
    assert env.covers(dev)
    assert not env.covers(dev * 2)
