"""Equiprobable type grids and the combinatorics of index sums.

Every player draws an independent type from the same marginal on
``[lower, upper]``.  After discretization each player holds one of ``N``
equiprobable grid points, so the law of the average type is determined by
how many index tuples ``(k_1, ..., k_n)`` share each index sum ``s``.  Those
counts are kept as exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .exceptions import ConfigurationError, ModelError, NumericalError

_INT64_MAX = np.iinfo(np.int64).max
_FLOAT_EXACT = 2**53

BISECTION_MAX_ITER = 200


@dataclass(frozen=True)
class TypeInterval:
    """A compact type interval with its marginal cdf."""

    lower: float
    upper: float
    cdf: Callable[[float], float]

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ConfigurationError("type interval bounds must be finite")
        if not self.lower < self.upper:
            raise ConfigurationError(
                f"type interval needs lower < upper, got [{self.lower}, {self.upper}]"
            )
        lo, hi = float(self.cdf(self.lower)), float(self.cdf(self.upper))
        if abs(lo) > 1e-9 or abs(hi - 1.0) > 1e-9:
            raise ModelError(f"cdf must be 0 at lower and 1 at upper, got {lo}, {hi}")
        sweep = np.array([self.cdf(t) for t in np.linspace(self.lower, self.upper, 1000)])
        if np.any(np.diff(sweep) < -1e-12):
            raise ModelError("cdf is decreasing somewhere on the type interval")

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "TypeInterval":
        width = upper - lower

        def cdf(t):
            return min(max((t - lower) / width, 0.0), 1.0)

        return cls(float(lower), float(upper), cdf)


@dataclass(frozen=True)
class TypeGrid:
    """Grid points ``theta^1 < ... < theta^N``; point k represents the cell
    ``(theta^{k-1}, theta^k]`` with ``theta^0 = lower``."""

    points: np.ndarray
    lower: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ConfigurationError("grid needs at least one point")
        if np.any(np.diff(pts) <= 0):
            raise ModelError("grid points must be strictly increasing")
        if pts[0] <= self.lower:
            raise ModelError("grid points must lie strictly above the lower bound")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.size

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    @property
    def max_gap(self) -> float:
        return float(np.max(np.diff(np.concatenate([[self.lower], self.points]))))

    def cell_index(self, theta) -> np.ndarray:
        """Zero-based cell index for each type (right-constant convention).

        ``theta == lower`` is assigned to the first cell.
        """
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < self.lower) or np.any(theta > self.upper):
            raise IndexError(
                f"types must lie in [{self.lower}, {self.upper}]"
            )
        return np.searchsorted(self.points, theta, side="left")


def build_uniform_grid(lower: float, upper: float, N: int) -> TypeGrid:
    """Quantile grid of the uniform law on ``[lower, upper]``."""
    if not (np.isfinite(lower) and np.isfinite(upper)) or not lower < upper:
        raise ConfigurationError(f"invalid bounds [{lower}, {upper}]")
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    N = int(N)
    k = np.arange(1, N + 1)
    points = lower + k * (upper - lower) / N
    points[-1] = upper
    return TypeGrid(points, float(lower))


def build_quantile_grid(interval: TypeInterval, N: int, tol: float = 1e-12) -> TypeGrid:
    """Solve ``cdf(theta) = k/N`` for k = 1..N by bisection."""
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    N = int(N)
    cdf = interval.cdf
    points = np.empty(N)
    for k in range(1, N + 1):
        target = k / N
        lo, hi = interval.lower, interval.upper
        f_lo, f_hi = cdf(lo), cdf(hi)
        for _ in range(BISECTION_MAX_ITER):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            f_mid = cdf(mid)
            if f_mid < f_lo - 1e-12 or f_mid > f_hi + 1e-12:
                raise ModelError(f"cdf is not monotone near theta={mid!r}")
            if f_mid < target:
                lo, f_lo = mid, f_mid
            else:
                hi, f_hi = mid, f_mid
        else:
            raise NumericalError(
                f"bisection for quantile {k}/{N} did not reach tol={tol} "
                f"in {BISECTION_MAX_ITER} iterations"
            )
        points[k - 1] = hi
    if np.any(np.diff(points) <= 0):
        raise ModelError("quantile points are not strictly increasing (cdf has atoms?)")
    return TypeGrid(points, interval.lower)


@dataclass(frozen=True)
class CountTable:
    """``rows[r][s - r]`` is the number of index r-tuples over ``1..N`` with sum s.

    Rows are int64 when ``N**n_players`` fits, otherwise object arrays of
    Python ints.  Row 0 is the empty tuple (sum 0, count 1).
    """

    n_players: int
    N: int
    rows: tuple

    def c(self, r: int, s: int) -> int:
        if not 0 <= r <= self.n_players:
            raise IndexError(f"r={r} outside 0..{self.n_players}")
        j = s - r
        row = self.rows[r]
        if 0 <= j < row.size:
            return int(row[j])
        return 0

    def row(self, r: int) -> np.ndarray:
        return self.rows[r]

    def sums(self, r: int) -> np.ndarray:
        return np.arange(r, r * self.N + 1)

    @property
    def exact(self) -> bool:
        return self.rows[-1].dtype == object

    @property
    def S(self) -> int:
        return self.n_players * (self.N - 1) + 1


def _window_sum(prev: np.ndarray, N: int) -> np.ndarray:
    # new[j] = sum_{t=j-N+1..j} prev[t], with out-of-range terms dropped
    L = prev.size
    prefix = np.concatenate([np.zeros(1, dtype=prev.dtype), np.cumsum(prev)])
    j = np.arange(L + N - 1)
    return prefix[np.minimum(j, L - 1) + 1] - prefix[np.maximum(0, j - N + 1)]


def sum_index_counts(n_players: int, N: int, *, allow_big: bool = True) -> CountTable:
    """Build ``c_r(s)`` for ``r = 0..n_players`` by repeated window sums."""
    if int(n_players) != n_players or n_players < 1:
        raise ConfigurationError("n_players must be a positive integer")
    if int(N) != N or N < 1:
        raise ConfigurationError("N must be a positive integer")
    n_players, N = int(n_players), int(N)
    big = N**n_players > _INT64_MAX
    if big and not allow_big:
        raise OverflowError(
            f"N**n = {N}**{n_players} exceeds int64; pass allow_big=True for exact Python ints"
        )
    dtype = object if big else np.int64
    rows = [np.array([1], dtype=dtype)]
    for _ in range(n_players):
        rows.append(_window_sum(rows[-1], N))
    for r in rows:
        r.setflags(write=False)
    return CountTable(n_players, N, tuple(rows))


def _exact_ratio(num: np.ndarray, den) -> np.ndarray:
    """Correctly rounded float ``num / den`` for exact integer inputs."""
    num = np.asarray(num)
    den_arr = np.asarray(den)
    if num.dtype != object and den_arr.dtype != object:
        if np.all(np.abs(num) < _FLOAT_EXACT) and np.all(np.abs(den_arr) < _FLOAT_EXACT):
            return num.astype(float) / den_arr.astype(float)
    num_b, den_b = np.broadcast_arrays(num, den_arr)
    out = np.empty(num_b.shape)
    for idx in np.ndindex(num_b.shape):
        d = int(den_b[idx])
        out[idx] = int(num_b[idx]) / d if d else 0.0
    return out


def avg_type_distribution(counts: CountTable) -> np.ndarray:
    """``P(index sum = s)`` for ``s = n..nN``."""
    return _exact_ratio(counts.row(counts.n_players), counts.N**counts.n_players)


def _rival_counts(counts: CountTable) -> np.ndarray:
    """N x S integer matrix ``c_{n-1}(s - k)``; row k-1, column s-n."""
    n, N = counts.n_players, counts.N
    rival = counts.row(n - 1)
    S = counts.S
    k = np.arange(1, N + 1)[:, None]
    s = np.arange(n, n * N + 1)[None, :]
    j = s - k - (n - 1)
    valid = (j >= 0) & (j < rival.size)
    out = np.zeros((N, S), dtype=rival.dtype)
    out[valid] = rival[j[valid]]
    return out


def conditional_avg_given_own(counts: CountTable, k: int) -> np.ndarray:
    """``P(index sum = s | own index = k)`` over ``s = n..nN``."""
    if counts.n_players < 2:
        raise ConfigurationError("conditional law needs at least one rival (n_players >= 2)")
    if not 1 <= k <= counts.N:
        raise IndexError(f"k={k} outside 1..{counts.N}")
    return _exact_ratio(_rival_counts(counts)[k - 1], counts.N ** (counts.n_players - 1))


def conditional_own_given_avg(counts: CountTable, s: int) -> np.ndarray:
    """``P(own index = k | index sum = s)`` over ``k = 1..N``."""
    n, N = counts.n_players, counts.N
    if not n <= s <= n * N:
        raise IndexError(f"s={s} outside {n}..{n * N}")
    col = _rival_counts(counts)[:, s - n]
    return _exact_ratio(col, counts.c(n, s))


@dataclass(frozen=True)
class TypeDiscretization:
    """A shared type grid plus the precomputed conditional tables.

    Attributes
    ----------
    grid : TypeGrid
    counts : CountTable
    """

    grid: TypeGrid
    counts: CountTable

    def __post_init__(self):
        if self.grid.N != self.counts.N:
            raise ConfigurationError("grid and count table disagree on N")

    @property
    def n_players(self) -> int:
        return self.counts.n_players

    @property
    def N(self) -> int:
        return self.counts.N

    @property
    def S(self) -> int:
        return self.counts.S

    @property
    def theta(self) -> np.ndarray:
        return self.grid.points

    @cached_property
    def sum_given_own(self) -> np.ndarray:
        """N x S matrix, row k: law of the index sum given own index k."""
        n = self.n_players
        if n == 1:
            return np.eye(self.N)
        out = _exact_ratio(_rival_counts(self.counts), self.N ** (n - 1))
        out.setflags(write=False)
        return out

    @cached_property
    def own_given_sum(self) -> np.ndarray:
        """S x N matrix, row s: law of one player's own index given the sum."""
        n = self.n_players
        rival = _rival_counts(self.counts).T
        total = np.asarray(self.counts.row(n))[:, None]
        out = _exact_ratio(rival, total)
        out.setflags(write=False)
        return out

    @cached_property
    def avg_type_probs(self) -> np.ndarray:
        out = avg_type_distribution(self.counts)
        out.setflags(write=False)
        return out

    @cached_property
    def avg_type_points(self) -> np.ndarray:
        """Expected average type given the index sum (exact for uniform grids)."""
        out = self.own_given_sum @ self.theta
        out.setflags(write=False)
        return out


def discretize(interval: TypeInterval, N: int, n_players: int, tol: float = 1e-12) -> TypeDiscretization:
    grid = build_quantile_grid(interval, N, tol)
    return TypeDiscretization(grid, sum_index_counts(n_players, N))


def discretize_uniform(lower: float, upper: float, N: int, n_players: int) -> TypeDiscretization:
    return TypeDiscretization(build_uniform_grid(lower, upper, N), sum_index_counts(n_players, N))
