"""Aggregate functions over the index-sum grid.

A strategy is an ``(N, m)`` table (row k is the action at type point k).  An
aggregate function is an ``(S, m)`` table indexed by the index sum
``s = n, ..., nN``; it stores the expected average action given the sum.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigurationError, ShapeError
from .type_space import CountTable, TypeDiscretization, TypeGrid, conditional_avg_given_own

BRUTE_FORCE_LIMIT = 10**6


def _tables(disc):
    if isinstance(disc, TypeDiscretization):
        return disc
    if isinstance(disc, CountTable):
        # grid points are irrelevant for the index-sum tables
        return TypeDiscretization(TypeGrid(np.arange(1.0, disc.N + 1), 0.0), disc)
    raise TypeError(f"expected TypeDiscretization or CountTable, got {type(disc).__name__}")


def as_strategy(strategy, N: int) -> np.ndarray:
    """Coerce to an ``(N, m)`` float table; 1-D input is read as ``m = 1``."""
    arr = np.asarray(strategy, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != N:
        raise ShapeError(f"strategy must have {N} rows, got shape {arr.shape}")
    return arr


def as_profile(profile, n_players: int, N: int) -> np.ndarray:
    """Coerce to an ``(n, N, m)`` float array."""
    arr = np.asarray(profile, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[:2] != (n_players, N):
        raise ShapeError(f"profile must have shape ({n_players}, {N}, m), got {arr.shape}")
    return arr


def contribution(strategy, disc) -> np.ndarray:
    """``h_i``: one player's share of the aggregate, ``(1/n) E[sigma(theta_i) | s]``."""
    t = _tables(disc)
    sigma = as_strategy(strategy, t.N)
    return t.own_given_sum @ sigma / t.n_players


def contributions(profile, disc) -> np.ndarray:
    """Stacked ``h_i(sigma_i)`` for every player, shape ``(n, S, m)``."""
    t = _tables(disc)
    prof = as_profile(profile, t.n_players, t.N)
    return np.einsum("sk,ikm->ism", t.own_given_sum, prof) / t.n_players


def full_aggregate(profile, disc) -> np.ndarray:
    """``H = sum_i h_i(sigma_i)``, shape ``(S, m)``."""
    return contributions(profile, disc).sum(axis=0)


def rival_aggregate(profile, i: int, disc) -> np.ndarray:
    """``sum_{j != i} h_j(sigma_j)`` for zero-based player ``i``."""
    h = contributions(profile, disc)
    return h.sum(axis=0) - h[i]


def brute_force_aggregate(profile, grid) -> np.ndarray:
    """Reference aggregate by enumerating every index tuple.

    Each tuple has weight ``N**-n``; tuples are grouped by index sum and the
    average action ``(1/n) sum_i sigma_i(theta_i)`` is averaged within a group.
    """
    N = grid.N if isinstance(grid, TypeGrid) else int(grid)
    prof = np.asarray(profile, dtype=float)
    if prof.ndim == 2:
        prof = prof[:, :, None]
    n = prof.shape[0]
    if prof.shape[1] != N:
        raise ShapeError(f"profile rows ({prof.shape[1]}) do not match grid size {N}")
    if N**n > BRUTE_FORCE_LIMIT:
        raise ConfigurationError(
            f"enumeration of {N}**{n} tuples exceeds {BRUTE_FORCE_LIMIT}; use full_aggregate"
        )
    S = n * (N - 1) + 1
    idx = np.indices((N,) * n).reshape(n, -1)  # every tuple, zero-based
    sums = idx.sum(axis=0)
    actions = prof[np.arange(n)[:, None], idx].sum(axis=0) / n  # (N**n, m)
    w = 1.0 / N**n
    mass = np.bincount(sums, minlength=S) * w
    total = np.stack(
        [np.bincount(sums, weights=actions[:, j] * w, minlength=S) for j in range(prof.shape[2])],
        axis=1,
    )
    return total / mass[:, None]


def conditional_aggregate_view(agg, own_strategy_row, k: int, disc):
    """Pair the aggregate table with the sum law given own index ``k`` (1-based)."""
    t = _tables(disc)
    agg = np.asarray(agg, dtype=float)
    if agg.shape[0] != t.S:
        raise ShapeError(f"aggregate must have {t.S} rows, got {agg.shape[0]}")
    weights = conditional_avg_given_own(t.counts, k)
    return weights, agg
