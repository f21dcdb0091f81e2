"""Game ingredients: action boxes, cost models and the Nash-Cournot instance."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ConfigurationError, ValidationError
from .type_space import TypeDiscretization, TypeInterval, build_quantile_grid, build_uniform_grid, sum_index_counts

# Base price of the benchmark preset; see README ("Benchmark parameters").
BENCHMARK_BASE_PRICE = 100.0
HIGH_BASE_PRICE = 1200.0


@dataclass(frozen=True)
class ActionBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("box bounds must be 1-D arrays of equal length")
        if not np.all(np.isfinite(lo) & np.isfinite(hi)) or np.any(lo >= hi):
            raise ConfigurationError(f"box needs finite lo < hi, got lo={lo}, hi={hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ActionBox":
        return cls(np.array([lo]), np.array([hi]))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def contains(self, x: np.ndarray, atol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))


class CostModel(ABC):
    """Cost ``f(x, agg, theta)`` of one player with its analytic partials.

    All methods are vectorized: ``x`` and ``agg`` have shape ``(..., m)`` and
    ``theta`` broadcasts against the leading axes.
    """

    dim: int = 1
    # True when grad_own and grad_agg are affine in agg; lets solvers average
    # the aggregate before evaluating the gradient.
    gradient_affine_in_aggregate: bool = False

    @abstractmethod
    def cost(self, x, agg, theta) -> np.ndarray:
        ...

    @abstractmethod
    def grad_own(self, x, agg, theta) -> np.ndarray:
        ...

    @abstractmethod
    def grad_agg(self, x, agg, theta) -> np.ndarray:
        ...

    def minimize_conditional(self, weights, rival_agg, theta, n_players, box):
        """Closed-form minimizer of ``sum_s w[k,s] f(x, x/n + rival_agg[s], theta[k])``.

        Returns an array of shape ``(K, m)`` or ``None`` if the model has no
        closed form, in which case callers fall back to projected gradient.
        """
        return None


@dataclass(frozen=True)
class CournotParams:
    """Nash-Cournot cost ``(agg + sign*(d - delta_i)) * x + theta * x**2``.

    ``delta_i = delta_step * (i - 1)`` for 1-based firm index ``i``.  With
    ``sign=+1`` the constant is a per-unit cost; ``sign=-1`` turns it into a
    demand intercept, ``(agg - d + delta_i) * x``.
    """

    d: float = HIGH_BASE_PRICE
    delta_step: float = 20.0
    sign: int = 1
    offsets: tuple | None = None

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ConfigurationError(f"sign must be +1 or -1, got {self.sign}")

    def delta(self, i: int) -> float:
        if self.offsets is not None:
            return float(self.offsets[i - 1])
        return self.delta_step * (i - 1)


def cournot_cost(x, agg, theta, params: CournotParams, i: int):
    return (agg + params.sign * (params.d - params.delta(i))) * x + theta * x * x


def cournot_grads(x, agg, theta, params: CournotParams, i: int):
    """Return ``(d f / d x, d f / d agg)``."""
    g_own = agg + params.sign * (params.d - params.delta(i)) + 2.0 * theta * x
    g_agg = x * np.ones_like(np.asarray(agg, dtype=float))
    return g_own, g_agg


class CournotCost(CostModel):
    dim = 1
    gradient_affine_in_aggregate = True

    def __init__(self, params: CournotParams, i: int):
        if i < 1:
            raise ConfigurationError("firm index is 1-based")
        self.params = params
        self.i = int(i)

    def __repr__(self):
        return f"CournotCost(i={self.i}, {self.params})"

    @property
    def intercept(self) -> float:
        return self.params.sign * (self.params.d - self.params.delta(self.i))

    def cost(self, x, agg, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        agg = np.asarray(agg, dtype=float)[..., 0]
        return cournot_cost(x, agg, theta, self.params, self.i)

    def grad_own(self, x, agg, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        agg = np.asarray(agg, dtype=float)[..., 0]
        return (agg + self.intercept + 2.0 * theta * x)[..., None]

    def grad_agg(self, x, agg, theta):
        x = np.asarray(x, dtype=float)[..., 0]
        agg = np.asarray(agg, dtype=float)[..., 0]
        return np.broadcast_to(x, np.broadcast_shapes(x.shape, agg.shape))[..., None].copy()

    def minimize_conditional(self, weights, rival_agg, theta, n_players, box):
        w = np.asarray(weights, dtype=float)
        mean_rival = (w @ np.asarray(rival_agg)[:, 0]) / w.sum(axis=1)
        theta = np.asarray(theta, dtype=float)
        # d/dx [(x/n + a + c) x + theta x^2] = 2x/n + a + c + 2 theta x
        x = -(mean_rival + self.intercept) / (2.0 * (theta + 1.0 / n_players))
        return box.project(x[:, None])


@dataclass(frozen=True)
class GameSpec:
    """Incomplete-information aggregative game with a shared type law."""

    n_players: int
    box: ActionBox
    cost_models: tuple
    type_interval: TypeInterval
    N: int
    uniform_types: bool = field(default=False)

    def __post_init__(self):
        if int(self.n_players) != self.n_players or self.n_players < 2:
            raise ConfigurationError("an aggregative game needs n_players >= 2")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError("N must be a positive integer")
        if len(self.cost_models) != self.n_players:
            raise ConfigurationError(
                f"expected {self.n_players} cost models, got {len(self.cost_models)}"
            )
        for model in self.cost_models:
            if model.dim != self.box.dim:
                raise ConfigurationError("cost model dimension differs from the action box")
        object.__setattr__(self, "cost_models", tuple(self.cost_models))

    @property
    def dim(self) -> int:
        return self.box.dim

    @cached_property
    def discretization(self) -> TypeDiscretization:
        return self.discretize(self.N)

    def discretize(self, N: int) -> TypeDiscretization:
        if self.uniform_types:
            grid = build_uniform_grid(self.type_interval.lower, self.type_interval.upper, N)
        else:
            grid = build_quantile_grid(self.type_interval, N)
        return TypeDiscretization(grid, sum_index_counts(self.n_players, N))

    def with_N(self, N: int) -> "GameSpec":
        return GameSpec(self.n_players, self.box, self.cost_models, self.type_interval, N, self.uniform_types)


def cournot_game(
    n_players: int = 5,
    N: int = 50,
    box: tuple[float, float] = (0.0, 20.0),
    types: tuple[float, float] = (1.0, 2.0),
    sign: int = -1,
    d: float = BENCHMARK_BASE_PRICE,
    delta_step: float = 20.0,
) -> GameSpec:
    """Nash-Cournot benchmark with independent uniform types."""
    params = CournotParams(d=d, delta_step=delta_step, sign=sign)
    models = tuple(CournotCost(params, i) for i in range(1, n_players + 1))
    return GameSpec(
        n_players,
        ActionBox.interval(*box),
        models,
        TypeInterval.uniform(*types),
        N,
        uniform_types=True,
    )


def saturated_cournot_game(N: int = 50, **kwargs) -> GameSpec:
    """High base price preset (sign +1, d = 1200).

    Every best response leaves the box, so the equilibrium sits at a corner
    (the origin for sign +1, the upper bound for sign -1) for every N.
    """
    kwargs.setdefault("sign", 1)
    kwargs.setdefault("d", HIGH_BASE_PRICE)
    return cournot_game(N=N, **kwargs)


@dataclass
class ModelReport:
    max_rel_grad_error: float
    min_monotonicity: float
    weak_convexity: bool
    per_player: list = field(default_factory=list)

    def __str__(self):
        flag = " (weak convexity flagged)" if self.weak_convexity else ""
        return (
            f"max relative gradient error {self.max_rel_grad_error:.3e}, "
            f"min monotonicity {self.min_monotonicity:.3e}{flag}"
        )


def _rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


def validate_model(
    spec: GameSpec,
    probes: int = 100,
    seed: int = 0,
    *,
    grad_tol: float = 1e-6,
    h: float = 1e-5,
    weak_tol: float = 1e-8,
) -> ModelReport:
    """Probe gradient consistency and monotonicity of every player's cost.

    Probes are drawn uniformly in the box, the box hull of aggregates and the
    type interval; both type endpoints are always probed.

    Raises
    ------
    ValidationError
        If a gradient disagrees with central differences beyond ``grad_tol``
        or the own-gradient is non-monotone at some probe.
    """
    if probes < 1:
        raise ConfigurationError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi, m = spec.box.lo, spec.box.hi, spec.dim
    t_lo, t_hi = spec.type_interval.lower, spec.type_interval.upper
    worst_err, worst_mono = 0.0, np.inf
    per_player = []
    for i, model in enumerate(spec.cost_models, start=1):
        x = rng.uniform(lo, hi, size=(probes, m))
        y = rng.uniform(lo, hi, size=(probes, m))
        agg = rng.uniform(lo, hi, size=(probes, m))
        theta = rng.uniform(t_lo, t_hi, size=probes)
        theta[0] = t_lo
        if probes > 1:
            theta[1] = t_hi

        with np.errstate(over="ignore", invalid="ignore"):
            f = np.asarray(model.cost(x, agg, theta))
            g_own = np.asarray(model.grad_own(x, agg, theta))
            g_agg = np.asarray(model.grad_agg(x, agg, theta))
        for name, v in (("cost", f), ("grad_own", g_own), ("grad_agg", g_agg)):
            if not np.all(np.isfinite(v)):
                bad = np.argwhere(~np.isfinite(v))[0][0]
                raise ValidationError(
                    f"player {i}: {name} is not finite at x={x[bad]}, agg={agg[bad]}, theta={theta[bad]}"
                )
        err_player = 0.0
        for j in range(m):
            step = h * np.maximum(1.0, np.abs(x[:, j]))
            e_x = np.zeros((probes, m))
            e_x[:, j] = step
            fd_own = (model.cost(x + e_x, agg, theta) - model.cost(x - e_x, agg, theta)) / (2 * step)
            step_a = h * np.maximum(1.0, np.abs(agg[:, j]))
            e_a = np.zeros((probes, m))
            e_a[:, j] = step_a
            fd_agg = (model.cost(x, agg + e_a, theta) - model.cost(x, agg - e_a, theta)) / (2 * step_a)
            for name, g, fd in (("grad_own", g_own[:, j], fd_own), ("grad_agg", g_agg[:, j], fd_agg)):
                err = _rel_err(g, fd)
                bad = int(np.argmax(err))
                if err[bad] > grad_tol:
                    raise ValidationError(
                        f"player {i}: {name}[{j}] disagrees with finite differences "
                        f"(rel. error {err[bad]:.3e}) at x={x[bad]}, agg={agg[bad]}, theta={theta[bad]}"
                    )
                err_player = max(err_player, float(err.max()))

        diff = x - y
        dg = np.asarray(model.grad_own(x, agg, theta)) - np.asarray(model.grad_own(y, agg, theta))
        mono = np.sum(dg * diff, axis=-1) / np.sum(diff * diff, axis=-1)
        bad = int(np.argmin(mono))
        if mono[bad] < -weak_tol:
            raise ValidationError(
                f"player {i}: own-gradient is not monotone at x={x[bad]}, y={y[bad]}, "
                f"agg={agg[bad]}, theta={theta[bad]} (normalized product {mono[bad]:.3e})"
            )
        per_player.append({"player": i, "max_rel_grad_error": err_player, "min_monotonicity": float(mono.min())})
        worst_err = max(worst_err, err_player)
        worst_mono = min(worst_mono, float(mono.min()))
    return ModelReport(worst_err, worst_mono, bool(worst_mono <= weak_tol), per_player)
