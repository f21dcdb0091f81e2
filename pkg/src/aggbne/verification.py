"""Centralized oracles: expected costs, best responses and certificates.

The expected cost of player i at own type point k holds the player's own
action at ``sigma_i[k]`` and lets rivals enter through their contribution to
the aggregate function:

    U_i(k) = sum_s P(s | k) f(sigma_i[k], sigma_i[k]/n + R_i(s), theta^k),
    R_i = sum_{j != i} h_j(sigma_j),

and the type-averaged cost is ``EU_i = mean_k U_i(k)``.  Player indices are
zero-based throughout this module.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass

import numpy as np

from .aggregation import as_profile, contributions
from .exceptions import ConfigurationError, NumericalError
from .game import ActionBox, CostModel, GameSpec
from .solver import bayes_gradient, init_state, project_box
from .type_space import TypeDiscretization, TypeGrid

logger = logging.getLogger(__name__)


def _rival_table(profile, i, disc):
    h = contributions(profile, disc)
    return h.sum(axis=0) - h[i]


def _conditional_cost(model, x, rival, weights, theta, n):
    """``sum_s w[k,s] f(x[k], x[k]/n + rival[s], theta[k])`` for every row k."""
    agg = rival[None, :, :] + x[:, None, :] / n
    xs = np.broadcast_to(x[:, None, :], agg.shape)
    return np.einsum("ks,ks->k", weights, model.cost(xs, agg, theta[:, None]))


def _conditional_grad(model, x, rival, weights, theta, n):
    agg = rival[None, :, :] + x[:, None, :] / n
    xs = np.broadcast_to(x[:, None, :], agg.shape)
    th = theta[:, None]
    G = model.grad_own(xs, agg, th) + model.grad_agg(xs, agg, th) / n
    return np.einsum("ks,ksm->km", weights, G)


def expected_cost(i: int, profile, disc: TypeDiscretization, model: CostModel):
    """Per-type conditional expected costs ``U_i(k)`` and their mean ``EU_i``."""
    prof = as_profile(profile, disc.n_players, disc.N)
    rival = _rival_table(prof, i, disc)
    U = _conditional_cost(model, prof[i], rival, disc.sum_given_own, disc.theta, disc.n_players)
    return U, float(U.mean())


def minimize_conditional_generic(model, weights, rival, theta, n, box: ActionBox, tol=1e-12, max_iter=10_000):
    """Row-wise projected gradient with backtracking.

    A trial step is accepted when the gradient change along it certifies the
    step against the local Lipschitz constant, ``|g(x+) - g(x)| <= |x+ - x| / step``.
    Gradients stay accurate near the optimum where cost differences drown in
    rounding.  Stops when ``|x - Proj(x - g)|`` is at most ``tol`` in every row.
    """
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum(axis=1, keepdims=True)
    K = weights.shape[0]
    x = np.broadcast_to(box.midpoint, (K, box.dim)).copy()
    step = np.ones(K)
    g = _conditional_grad(model, x, rival, weights, theta, n)
    for _ in range(max_iter):
        resid = np.abs(x - project_box(x - g, box)).max(axis=1)
        if np.all(resid <= tol):
            return x
        active = resid > tol
        step = np.where(active, step * 2.0, step)
        for _ in range(60):
            x_new = np.where(active[:, None], project_box(x - step[:, None] * g, box), x)
            g_new = _conditional_grad(model, x_new, rival, weights, theta, n)
            moved = np.linalg.norm(x_new - x, axis=1)
            ok = step * np.linalg.norm(g_new - g, axis=1) <= moved * (1 + 1e-12)
            if np.all(ok | ~active):
                break
            step = np.where(active & ~ok, step * 0.5, step)
        x, g = x_new, g_new
    raise NumericalError(f"best response did not converge within {max_iter} iterations")


def best_response(
    i: int,
    profile,
    disc: TypeDiscretization,
    model: CostModel,
    box: ActionBox,
    tol: float = 1e-12,
    method: str = "auto",
) -> np.ndarray:
    """Best response of player ``i`` to the rivals in ``profile``, type by type.

    ``method`` is ``closed`` (model's closed form), ``generic`` (projected
    gradient) or ``auto`` (closed form when available).  Row i of ``profile``
    is ignored.
    """
    prof = as_profile(profile, disc.n_players, disc.N)
    rival = _rival_table(prof, i, disc)
    return _best_response_from_weights(
        model, disc.sum_given_own, rival, disc.theta, disc.n_players, box, tol, method
    )


def _best_response_from_weights(model, weights, rival, theta, n, box, tol, method):
    if method not in ("auto", "closed", "generic"):
        raise ConfigurationError(f"unknown best-response method {method!r}")
    if method != "generic":
        x = model.minimize_conditional(weights, rival, theta, n, box)
        if x is not None:
            return np.asarray(x, dtype=float)
        if method == "closed":
            raise ConfigurationError(f"{model!r} has no closed-form best response")
    return minimize_conditional_generic(model, weights, rival, theta, n, box, tol)


@dataclass
class ExploitabilityReport:
    gains: np.ndarray
    epsilon: float
    best_responses: np.ndarray

    def __str__(self):
        return f"epsilon={self.epsilon:.3e} (gains {np.array2string(self.gains, precision=3)})"


def exploitability(profile, disc: TypeDiscretization, spec: GameSpec, tol: float = 1e-12, method="auto") -> ExploitabilityReport:
    """Largest drop in type-averaged expected cost from a unilateral best response."""
    prof = as_profile(profile, disc.n_players, disc.N)
    gains = np.empty(disc.n_players)
    brs = np.empty_like(prof)
    for i, model in enumerate(spec.cost_models):
        br = best_response(i, prof, disc, model, spec.box, tol, method)
        deviated = prof.copy()
        deviated[i] = br
        _, eu_now = expected_cost(i, prof, disc, model)
        _, eu_br = expected_cost(i, deviated, disc, model)
        gains[i] = eu_now - eu_br
        brs[i] = br
    return ExploitabilityReport(gains, float(gains.max()), brs)


def pseudo_gradient(profile, disc: TypeDiscretization, spec: GameSpec, include_chain=True) -> np.ndarray:
    """Stacked per-type gradients evaluated at the exact aggregate."""
    prof = as_profile(profile, disc.n_players, disc.N)
    H = contributions(prof, disc).sum(axis=0)
    return np.stack(
        [
            bayes_gradient(prof[i], H, disc, model, include_chain=include_chain, normalize=False)
            for i, model in enumerate(spec.cost_models)
        ]
    )


@dataclass
class DBNEResult:
    profile: np.ndarray
    certificate: ExploitabilityReport
    n_iter: int
    residual: float


def _lipschitz_estimate(spec, disc, rng, probes=4):
    lo, hi = spec.box.lo, spec.box.hi
    shape = (disc.n_players, disc.N, spec.dim)
    L = 0.0
    for _ in range(probes):
        x = rng.uniform(lo, hi, size=shape)
        y = rng.uniform(lo, hi, size=shape)
        dF = pseudo_gradient(x, disc, spec) - pseudo_gradient(y, disc, spec)
        L = max(L, np.linalg.norm(dF) / np.linalg.norm(x - y))
    return L


def central_dbne(
    spec: GameSpec,
    disc: TypeDiscretization | None = None,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    *,
    xtol: float = 1e-10,
    init="midpoint",
    seed: int | None = 0,
    step0: float | None = None,
    decay: float = 1e4,
    check_every: int = 10,
) -> DBNEResult:
    """Equilibrium of the discretized game by centralized projected gradient.

    Uses the exact aggregate (no consensus layer) and the diminishing step
    ``step0 / (1 + t/decay)``; ``step0`` defaults to half the inverse of a
    sampled Lipschitz constant of the pseudo-gradient.  Stops once the natural
    residual ``|sigma - Proj(sigma - F(sigma))|_inf`` is below ``xtol`` and the
    exploitability certificate is below ``tol``.
    """
    disc = disc or spec.discretization
    rng = np.random.default_rng(seed)
    if step0 is None:
        step0 = 0.5 / max(_lipschitz_estimate(spec, disc, rng), 1e-12)
    sigma = init_state(spec, disc, init, seed).strategies
    resid = np.inf
    report = None
    for t in range(max_iter):
        F = pseudo_gradient(sigma, disc, spec)
        if t % check_every == 0:
            resid = float(np.abs(sigma - project_box(sigma - F, spec.box)).max())
            if resid <= xtol:
                report = exploitability(sigma, disc, spec)
                if report.epsilon <= tol:
                    logger.debug("central DBNE: %d iterations, residual %.2e", t, resid)
                    return DBNEResult(sigma, report, t, resid)
        sigma = project_box(sigma - step0 / (1.0 + t / decay) * F, spec.box)
        if not np.all(np.isfinite(sigma)):
            raise NumericalError(f"central iteration diverged at t={t}")
    report = report or exploitability(sigma, disc, spec)
    raise NumericalError(
        f"central DBNE not certified after {max_iter} iterations "
        f"(residual {resid:.3e}, exploitability {report.epsilon:.3e})"
    )


def refine_strategy(strategy, coarse_grid: TypeGrid, fine_grid: TypeGrid) -> np.ndarray:
    """Right-constant extension of a coarse strategy table to a finer grid."""
    strategy = np.asarray(strategy, dtype=float)
    if strategy.shape[0] != coarse_grid.N:
        raise ConfigurationError("strategy rows do not match the coarse grid")
    slack = 1e-9 * (coarse_grid.upper - coarse_grid.lower)
    theta = fine_grid.points
    if np.any(theta > coarse_grid.upper + slack):
        raise IndexError("fine grid extends above the coarse grid's upper bound")
    idx = np.searchsorted(coarse_grid.points + slack, theta, side="left")
    return strategy[idx]


def _check_nested(N_list, N_fine):
    for N in N_list:
        if N < 1 or N_fine % N:
            raise ConfigurationError(f"N_fine={N_fine} is not a multiple of N={N}")


@dataclass
class StudyRow:
    """One line of the study table; ``certificate`` is the coarse exploitability."""

    N: int
    epsilon: float
    certified_tol: float
    runtime_ms: float
    certificate: float = float("nan")


STUDY_COLUMNS = ("N", "epsilon", "certified_tol", "runtime_ms")


def write_study_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STUDY_COLUMNS)
        for r in rows:
            writer.writerow([r.N, f"{r.epsilon:.17g}", f"{r.certified_tol:.17g}", f"{r.runtime_ms:.3f}"])


def epsilon_study(spec: GameSpec, N_list, N_fine: int, tol: float = 1e-8, **dbne_kwargs) -> list:
    """Exploitability, in the ``N_fine`` model, of each refined ``DBNE(N)``."""
    N_list = sorted(int(N) for N in N_list)
    _check_nested(N_list, N_fine)
    fine = spec.discretize(N_fine)
    rows = []
    for N in N_list:
        start = time.perf_counter()
        disc = spec.discretize(N)
        result = central_dbne(spec, disc, tol, **dbne_kwargs)
        refined = np.stack([refine_strategy(s, disc.grid, fine.grid) for s in result.profile])
        eps = exploitability(refined, fine, spec).epsilon
        elapsed = 1e3 * (time.perf_counter() - start)
        rows.append(StudyRow(N, eps, tol, elapsed, result.certificate.epsilon))
    return rows


def best_response_refinement_check(
    spec: GameSpec,
    rivals_fine,
    N_list,
    N_fine: int,
    players=None,
    tol: float = 1e-12,
) -> list:
    """Sup-norm gap between refined coarse best responses and the fine one.

    The coarse best response at coarse point k weighs the aggregate law by the
    total fine-grid mass of the coarse cell (the fine rows inside the cell are
    summed) and evaluates the cost at the coarse type point.  Returns
    ``(N, gap)`` pairs sorted by N; the gap is the maximum over ``players``.
    """
    N_list = sorted(int(N) for N in N_list)
    _check_nested(N_list, N_fine)
    fine = spec.discretize(N_fine)
    prof = as_profile(rivals_fine, spec.n_players, N_fine)
    players = range(spec.n_players) if players is None else players
    n = spec.n_players
    fine_brs = {}
    rivals = {}
    for i in players:
        model = spec.cost_models[i]
        rivals[i] = _rival_table(prof, i, fine)
        fine_brs[i] = _best_response_from_weights(
            model, fine.sum_given_own, rivals[i], fine.theta, n, spec.box, tol, "auto"
        )
    out = []
    for N in N_list:
        coarse = spec.discretize(N)
        block = N_fine // N
        weights = fine.sum_given_own.reshape(N, block, -1).sum(axis=1)
        gap = 0.0
        for i in players:
            model = spec.cost_models[i]
            br = _best_response_from_weights(model, weights, rivals[i], coarse.theta, n, spec.box, tol, "auto")
            gap = max(gap, float(np.abs(refine_strategy(br, coarse.grid, fine.grid) - fine_brs[i]).max()))
        out.append((N, gap))
    return out
