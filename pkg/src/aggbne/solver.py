"""Distributed projected-gradient seeking with dynamic average tracking.

Each agent ``i`` keeps its strategy table ``sigma_i`` (N x m) and a local
estimate ``v_i`` (S x m) of the aggregate function.  One synchronous round:

1. mix estimates with the neighbours: ``u_i = sum_j W_ij v_j``;
2. evaluate the Bayesian gradient of its expected cost against ``u_i``;
3. projected step ``sigma_i <- Proj(sigma_i - alpha * g_i)``;
4. track the aggregate: ``v_i <- u_i - h_i(sigma_i_old) + h_i(sigma_i_new)``.

Because every ``W`` is doubly stochastic, ``sum_i v_i = sum_i h_i(sigma_i)``
holds at every round up to rounding, so each estimate approaches the mean
contribution and ``n * u_i`` approaches the aggregate.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aggregation import as_profile, as_strategy, contribution
from .exceptions import ConfigurationError, DivergenceError, ShapeError
from .game import ActionBox, CostModel, GameSpec
from .network import GraphSchedule, schedule_at
from .type_space import TypeDiscretization

logger = logging.getLogger(__name__)

INIT_RULES = ("zeros", "midpoint", "random")


def project_box(table, box: ActionBox) -> np.ndarray:
    """Euclidean projection onto the box, row by row."""
    return np.clip(table, box.lo, box.hi)


@dataclass(frozen=True)
class StepsizeSchedule:
    """``alpha(t) = a / (b + t)``, or ``table[t]`` when a table is given."""

    a: float = 2.0
    b: float = 10.0
    table: tuple | None = None

    def __post_init__(self):
        if self.table is not None:
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 1 or tab.size == 0 or np.any(tab <= 0) or np.any(np.diff(tab) > 0):
                raise ConfigurationError("stepsize table must be positive and non-increasing")
            object.__setattr__(self, "table", tuple(tab.tolist()))
        elif not (self.a > 0 and self.b >= 1):
            raise ConfigurationError(f"stepsize needs a > 0 and b >= 1, got a={self.a}, b={self.b}")

    def __call__(self, t: int) -> float:
        if self.table is not None:
            if t >= len(self.table):
                raise ConfigurationError(f"stepsize table has no entry for t={t}")
            return self.table[t]
        return self.a / (self.b + t)


def bayes_gradient(
    strategy,
    u,
    disc: TypeDiscretization,
    model: CostModel,
    *,
    include_chain: bool = True,
    hold_own: bool = True,
    normalize: bool = True,
) -> np.ndarray:
    """Gradient of one player's expected cost with respect to its strategy table.

    Row k is ``sum_s P(s | k) [grad_own + chi/n * grad_agg]`` evaluated at
    ``(sigma[k], A[k, s], theta^k)``, scaled by ``1/N`` when ``normalize``.

    With ``hold_own`` the aggregate seen at own type k replaces the player's
    averaged contribution ``h_i(sigma)(s)`` inside ``u`` by ``sigma[k] / n``:
    ``A[k, s] = u[s] - h_i(sigma)(s) + sigma[k] / n``.  When ``u`` is the exact
    aggregate this is the exact gradient of the expected cost.  Without it,
    ``A[k, s] = u[s]``.
    """
    n, N = disc.n_players, disc.N
    sigma = as_strategy(strategy, N)
    u = np.asarray(u, dtype=float)
    if u.shape != (disc.S, sigma.shape[1]):
        raise ShapeError(f"aggregate must have shape {(disc.S, sigma.shape[1])}, got {u.shape}")
    chi = 1.0 if include_chain else 0.0
    P = disc.sum_given_own
    theta = disc.theta
    base = u - contribution(sigma, disc) if hold_own else u
    own = sigma / n if hold_own else 0.0 * sigma

    if model.gradient_affine_in_aggregate:
        agg = P @ base + P.sum(axis=1)[:, None] * own
        g = model.grad_own(sigma, agg, theta) + (chi / n) * model.grad_agg(sigma, agg, theta)
    else:
        agg = base[None, :, :] + own[:, None, :]
        x = np.broadcast_to(sigma[:, None, :], agg.shape)
        th = theta[:, None]
        G = model.grad_own(x, agg, th) + (chi / n) * model.grad_agg(x, agg, th)
        g = np.einsum("ks,ksm->km", P, G)
    if normalize:
        g = g / N
    return np.asarray(g, dtype=float)


@dataclass
class SolverState:
    t: int
    strategies: np.ndarray  # (n, N, m)
    estimates: np.ndarray  # (n, S, m)
    contributions: np.ndarray  # (n, S, m), h_i(sigma_i)
    mixed: np.ndarray  # (n, S, m), last u
    max_conservation_error: float = 0.0

    def conservation_error(self) -> float:
        return float(np.abs(self.estimates.sum(axis=0) - self.contributions.sum(axis=0)).max())


def _contributions(profile, disc):
    return np.matmul(disc.own_given_sum, profile) / disc.n_players


def init_state(spec: GameSpec, disc: TypeDiscretization, init="midpoint", seed: int | None = 0) -> SolverState:
    """Initial strategies by rule (``zeros``, ``midpoint``, ``random``) or an
    explicit ``(n, N, m)`` array; estimates start at ``v_i = h_i(sigma_i)``."""
    n, N, m = spec.n_players, disc.N, spec.dim
    box = spec.box
    if isinstance(init, str):
        if init == "zeros":
            if not box.contains(np.zeros(m)):
                raise ConfigurationError("zeros init is infeasible: 0 lies outside the action box")
            sigma = np.zeros((n, N, m))
        elif init == "midpoint":
            sigma = np.broadcast_to(box.midpoint, (n, N, m)).copy()
        elif init == "random":
            rng = np.random.default_rng(seed)
            sigma = rng.uniform(box.lo, box.hi, size=(n, N, m))
        else:
            raise ConfigurationError(f"unknown init rule {init!r}; choose from {INIT_RULES}")
    else:
        sigma = as_profile(init, n, N).copy()
        if not box.contains(sigma):
            raise ConfigurationError("explicit initial profile leaves the action box")
    h = _contributions(sigma, disc)
    return SolverState(0, sigma, h.copy(), h, h.copy())


def mix_estimates(estimates, W) -> np.ndarray:
    """``u_i = sum_j W_ij v_j`` for stacked ``(n, S, m)`` estimates."""
    v = np.asarray(estimates, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != (v.shape[0], v.shape[0]):
        raise ShapeError(f"weight matrix {W.shape} does not match {v.shape[0]} agents")
    return np.tensordot(W, v, axes=(1, 0))


@dataclass(frozen=True)
class StepOptions:
    """Gradient options for one round.

    ``rescale`` multiplies the mixed estimate by ``n`` before the gradient is
    evaluated: tracking keeps the mean of the estimates equal to the mean
    contribution ``H / n``, so ``n * u_i`` is the estimate of ``H`` itself.
    """

    include_chain: bool = True
    hold_own: bool = True
    normalize: bool = False
    rescale: bool = True


def step(
    state: SolverState,
    spec: GameSpec,
    disc: TypeDiscretization,
    W,
    alpha: float,
    options: StepOptions = StepOptions(),
    executor: ThreadPoolExecutor | None = None,
    mixed=None,
) -> SolverState:
    """One synchronous round; all agents read the time-t snapshot."""
    if alpha < 0:
        raise ConfigurationError("stepsize must be non-negative")
    u = mix_estimates(state.estimates, W) if mixed is None else mixed
    sigma = state.strategies
    scale = float(spec.n_players) if options.rescale else 1.0

    def grad(i):
        return bayes_gradient(
            sigma[i],
            scale * u[i],
            disc,
            spec.cost_models[i],
            include_chain=options.include_chain,
            hold_own=options.hold_own,
            normalize=options.normalize,
        )

    idx = range(spec.n_players)
    grads = list(executor.map(grad, idx)) if executor is not None else [grad(i) for i in idx]
    new_sigma = project_box(sigma - alpha * np.stack(grads), spec.box)
    new_h = _contributions(new_sigma, disc)
    new_v = u - state.contributions + new_h
    if not (np.all(np.isfinite(new_sigma)) and np.all(np.isfinite(new_v))):
        raise DivergenceError(f"non-finite iterate at iteration {state.t}", iteration=state.t)
    new = SolverState(state.t + 1, new_sigma, new_v, new_h, u, state.max_conservation_error)
    new.max_conservation_error = max(new.max_conservation_error, new.conservation_error())
    return new


@dataclass
class Trace:
    """Convergence records; one row per recorded iteration."""

    columns: list
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(tuple(row))

    def to_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def column(self, name) -> np.ndarray:
        return self.to_array()[:, self.columns.index(name)]

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([str(int(row[0]))] + [f"{v:.17g}" for v in row[1:]])


@dataclass
class RunResult:
    state: SolverState
    trace: Trace


def _check_probes(probes, n, N):
    out = []
    for p in probes:
        i, k = int(p[0]), int(p[1])
        if not (1 <= i <= n and 1 <= k <= N):
            raise ConfigurationError(f"probe (player {i}, type {k}) out of range")
        out.append((i, k))
    return out


def run(
    spec: GameSpec,
    schedule: GraphSchedule,
    stepsizes: StepsizeSchedule,
    T: int,
    *,
    disc: TypeDiscretization | None = None,
    record_every: int = 100,
    oracle=None,
    probes=(),
    init="midpoint",
    seed: int | None = 0,
    options: StepOptions = StepOptions(),
    n_jobs: int = 1,
) -> RunResult:
    """Execute ``T`` rounds and record a convergence trace.

    Rows are recorded at ``t = 0``, every ``record_every`` rounds and at
    ``t = T``.  The consensus residual at ``t`` is ``max_i ||u_i - mean(v)||``
    for the mix performed with ``W(t)``; probes are 1-based
    ``(player, type index)`` pairs and report the first action component.
    """
    if T < 0:
        raise ConfigurationError("T must be >= 0")
    if record_every < 1:
        raise ConfigurationError("record_every must be >= 1")
    if schedule.n != spec.n_players:
        raise ConfigurationError("schedule size differs from the number of players")
    disc = disc or spec.discretization
    probes = _check_probes(probes, spec.n_players, disc.N)
    if oracle is not None:
        oracle = as_profile(oracle, spec.n_players, disc.N)
    columns = ["t", "consensus_residual", "oracle_distance", "stepsize"]
    columns += [f"probe_{i}_{k}" for i, k in probes]
    trace = Trace(columns)
    state = init_state(spec, disc, init, seed)

    def record(state, u, t):
        vbar = state.estimates.mean(axis=0)
        resid = max(float(np.linalg.norm(u[i] - vbar)) for i in range(spec.n_players))
        dist = float(np.linalg.norm(state.strategies - oracle)) if oracle is not None else float("nan")
        row = [t, resid, dist, stepsizes(t)]
        row += [float(state.strategies[i - 1, k - 1, 0]) for i, k in probes]
        trace.append(row)

    executor = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        for t in range(T):
            W = schedule_at(schedule, t)
            u = mix_estimates(state.estimates, W)
            if t % record_every == 0:
                record(state, u, t)
            state = step(state, spec, disc, W, stepsizes(t), options, executor, mixed=u)
        u = mix_estimates(state.estimates, schedule_at(schedule, T))
        record(state, u, T)
    finally:
        if executor is not None:
            executor.shutdown()
    logger.debug("run finished: T=%d, max conservation error %.3e", T, state.max_conservation_error)
    return RunResult(state, trace)
