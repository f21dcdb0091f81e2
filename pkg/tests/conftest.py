import numpy as np
import pytest

from aggbne.game import CostModel, cournot_game

ACCEPTANCE = {}


@pytest.fixture
def record_acceptance():
    def record(criterion, passed, detail=""):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


class SoftplusCost(CostModel):
    """Smooth non-quadratic cost whose gradient is not affine in the aggregate."""

    dim = 1

    def __init__(self, shift=0.0):
        self.shift = shift

    def cost(self, x, agg, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        a = np.asarray(agg, dtype=float)[..., 0]
        return theta * x**2 + x * np.log1p(np.exp(a - self.shift)) - 3.0 * x

    def grad_own(self, x, agg, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        a = np.asarray(agg, dtype=float)[..., 0]
        return (2 * theta * x + np.log1p(np.exp(a - self.shift)) - 3.0)[..., None]

    def grad_agg(self, x, agg, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        a = np.asarray(agg, dtype=float)[..., 0]
        return (x / (1.0 + np.exp(self.shift - a)))[..., None]


@pytest.fixture
def small_game():
    return cournot_game(n_players=3, N=4)


@pytest.fixture
def softplus_game():
    from aggbne.game import ActionBox, GameSpec
    from aggbne.type_space import TypeInterval

    return GameSpec(
        3,
        ActionBox.interval(0.0, 4.0),
        tuple(SoftplusCost(shift=0.5 * i) for i in range(3)),
        TypeInterval.uniform(1.0, 2.0),
        4,
        uniform_types=True,
    )
