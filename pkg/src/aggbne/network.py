"""Time-varying communication graphs with doubly stochastic weights.

Nodes are zero-based.  Every weight matrix is built with Metropolis weights
from an undirected edge set, which makes it symmetric and doubly stochastic
with self-loops on the diagonal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import ConfigurationError, ValidationError

MODES = ("complete", "ring-static", "round-robin-edges", "random-gossip", "static", "cycle")


def _normalize_edges(n, edges):
    out = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if not (0 <= a < n and 0 <= b < n):
            raise ConfigurationError(f"edge ({a}, {b}) outside nodes 0..{n - 1}")
        if a != b:
            out.add((min(a, b), max(a, b)))
    return frozenset(out)


@lru_cache(maxsize=256)
def _metropolis_cached(n, edges):
    deg = np.zeros(n, dtype=int)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    if n > 1 and np.all(deg == n - 1):
        # complete graph: exact averaging, so one product already reaches 1/n
        W = np.full((n, n), 1.0 / n)
        W.setflags(write=False)
        return W
    W = np.zeros((n, n))
    for a, b in edges:
        w = 1.0 / (1.0 + max(deg[a], deg[b]))
        W[a, b] = W[b, a] = w
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    W.setflags(write=False)
    return W


def metropolis_weights(n: int, edges) -> np.ndarray:
    """Metropolis-Hastings weights ``W_ij = 1 / (1 + max(deg_i, deg_j))``."""
    return _metropolis_cached(int(n), _normalize_edges(n, edges))


def complete_edges(n):
    return frozenset((a, b) for a in range(n) for b in range(a + 1, n))


def ring_edges(n):
    if n == 2:
        return frozenset({(0, 1)})
    return frozenset((min(a, (a + 1) % n), max(a, (a + 1) % n)) for a in range(n))


def path_edges(n):
    return tuple((a, a + 1) for a in range(n - 1))


@dataclass(frozen=True)
class GraphSchedule:
    """Deterministic description of the graph sequence ``G(0), G(1), ...``.

    Parameters
    ----------
    n : int
        Number of agents.
    mode : str
        ``complete``, ``ring-static``, ``round-robin-edges`` (one path edge per
        step, period ``n - 1``), ``random-gossip`` (the round-robin backbone
        plus random extra edges drawn from ``seed`` and ``t``), ``static``
        (fixed ``edge_sets[0]``) or ``cycle`` (repeat ``edge_sets``).
    B : int, optional
        Connectivity window; defaults to the mode's period.
    eta : float, optional
        Declared floor on positive weights; defaults to ``1/n``, which
        Metropolis weights always satisfy.
    """

    n: int
    mode: str = "complete"
    seed: int = 0
    B: int | None = None
    eta: float | None = None
    extra_edge_prob: float = 0.3
    edge_sets: tuple = field(default=())

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError("n must be a positive integer")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown graph mode {self.mode!r}; choose from {MODES}")
        if self.mode in ("static", "cycle") and not self.edge_sets:
            raise ConfigurationError(f"mode {self.mode!r} needs edge_sets")
        sets = tuple(_normalize_edges(self.n, es) for es in self.edge_sets)
        object.__setattr__(self, "edge_sets", sets)
        if self.B is not None and self.B < 1:
            raise ConfigurationError("window B must be >= 1")
        if not 0.0 <= self.extra_edge_prob <= 1.0:
            raise ConfigurationError("extra_edge_prob must lie in [0, 1]")

    @property
    def period(self) -> int:
        if self.mode in ("round-robin-edges", "random-gossip"):
            return max(self.n - 1, 1)
        if self.mode == "cycle":
            return len(self.edge_sets)
        return 1

    @property
    def window(self) -> int:
        return self.B if self.B is not None else self.period

    @property
    def eta_floor(self) -> float:
        return self.eta if self.eta is not None else 1.0 / self.n

    def edges_at(self, t: int) -> frozenset:
        n = self.n
        if self.mode == "complete":
            return complete_edges(n)
        if self.mode == "ring-static":
            return ring_edges(n) if n > 1 else frozenset()
        if self.mode == "static":
            return self.edge_sets[0]
        if self.mode == "cycle":
            return self.edge_sets[t % len(self.edge_sets)]
        if n == 1:
            return frozenset()
        backbone = path_edges(n)[t % (n - 1)]
        if self.mode == "round-robin-edges":
            return frozenset({backbone})
        rng = np.random.default_rng([self.seed, t])
        pairs = sorted(complete_edges(n))
        draws = rng.random(len(pairs))
        extra = {p for p, u in zip(pairs, draws) if u < self.extra_edge_prob}
        return frozenset(extra | {backbone})


def schedule_at(schedule: GraphSchedule, t: int) -> np.ndarray:
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    return _metropolis_cached(schedule.n, schedule.edges_at(int(t)))


def _connected(n, edges) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(a) for a in range(n)}) == 1


def check_weight_matrix(W: np.ndarray, eta: float, atol: float = 1e-12) -> str | None:
    """Return a description of the first violated invariant, or ``None``."""
    if np.any(W < 0):
        return "negative entry"
    if np.any(np.abs(W.sum(axis=1) - 1) > atol):
        return "row sums differ from 1"
    if np.any(np.abs(W.sum(axis=0) - 1) > atol):
        return "column sums differ from 1"
    if np.any(np.diag(W) <= 0):
        return "missing self-loop"
    positive = W[W > 0]
    if positive.min() < eta - atol:
        return f"positive entry {positive.min():.3g} below eta={eta:.3g}"
    return None


@dataclass
class ScheduleReport:
    horizon: int
    window: int
    eta_empirical: float
    windows_checked: int

    def __str__(self):
        return (
            f"{self.windows_checked} windows of length {self.window} connected over "
            f"horizon {self.horizon}; empirical eta {self.eta_empirical:.4g}"
        )


def validate_schedule(schedule: GraphSchedule, horizon: int) -> ScheduleReport:
    """Check weight invariants at every t < horizon and joint connectivity of
    the union over every window ``[t, t + B)`` inside the horizon.

    Raises
    ------
    ValidationError
        Naming the offending time or window.
    """
    B = schedule.window
    if horizon < B:
        raise ConfigurationError(f"horizon {horizon} shorter than window B={B}")
    eta = np.inf
    edge_log = []
    for t in range(horizon):
        W = schedule_at(schedule, t)
        problem = check_weight_matrix(W, schedule.eta_floor)
        if problem:
            raise ValidationError(f"weight matrix at t={t}: {problem}")
        eta = min(eta, float(W[W > 0].min()))
        edge_log.append(schedule.edges_at(t))
    checked = 0
    for t in range(horizon - B + 1):
        union = frozenset().union(*edge_log[t : t + B])
        if not _connected(schedule.n, union):
            raise ValidationError(
                f"union of graphs over window [{t}, {t + B - 1}] is not connected"
            )
        checked += 1
    return ScheduleReport(horizon, B, eta, checked)


def transition_product(schedule: GraphSchedule, s: int, k: int) -> np.ndarray:
    """``Phi(k, s) = W(k) W(k-1) ... W(s)``."""
    if not 0 <= s < k:
        raise ValueError(f"transition product needs 0 <= s < k, got s={s}, k={k}")
    phi = schedule_at(schedule, s).copy()
    for t in range(s + 1, k + 1):
        phi = schedule_at(schedule, t) @ phi
    return phi


def mixing_diagnostic(schedule: GraphSchedule, s: int, horizon: int) -> np.ndarray:
    """``max_ij |Phi(k, s)_ij - 1/n|`` for ``k = s+1, ..., horizon``."""
    if horizon <= s:
        raise ValueError("horizon must exceed s")
    n = schedule.n
    phi = schedule_at(schedule, s).copy()
    out = np.empty(horizon - s)
    for j, k in enumerate(range(s + 1, horizon + 1)):
        phi = schedule_at(schedule, k) @ phi
        out[j] = np.abs(phi - 1.0 / n).max()
    return out


@dataclass(frozen=True)
class GeometricEnvelope:
    """``Gamma * beta**j``; deviations at or below ``floor`` count as zero."""

    gamma: float
    beta: float
    floor: float = 0.0

    def bound(self, steps) -> np.ndarray:
        return self.gamma * self.beta ** np.asarray(steps, dtype=float)

    def covers(self, deviations) -> bool:
        dev = np.asarray(deviations, dtype=float)
        steps = np.arange(1, dev.size + 1)
        return bool(np.all((dev <= self.bound(steps) * (1 + 1e-12)) | (dev <= self.floor)))


def fit_geometric_envelope(deviations, floor: float = 1e-14) -> GeometricEnvelope:
    """Fit ``Gamma * beta**j`` above a sequence indexed by ``j = 1, 2, ...``.

    The rate is the least-squares slope of ``log(dev)`` over entries above
    ``floor`` (entries below it are rounding noise); ``Gamma`` is then the
    smallest constant making the envelope dominate every such entry.
    """
    dev = np.asarray(deviations, dtype=float)
    steps = np.arange(1, dev.size + 1)
    mask = dev > floor
    if mask.sum() < 2:
        return GeometricEnvelope(float(dev.max(initial=0.0)), 0.0, floor)
    slope = np.polyfit(steps[mask], np.log(dev[mask]), 1)[0]
    beta = float(min(np.exp(slope), 1.0))
    gamma = float(np.max(dev[mask] / beta ** steps[mask]))
    return GeometricEnvelope(gamma, beta, floor)


def write_weights_csv(schedule: GraphSchedule, times, path) -> None:
    """One row per matrix entry: ``t,i,j,weight``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "j", "weight"])
        for t in times:
            W = schedule_at(schedule, t)
            for i in range(schedule.n):
                for j in range(schedule.n):
                    writer.writerow([t, i, j, repr(float(W[i, j]))])
