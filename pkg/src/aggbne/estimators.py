"""Estimator-style wrappers around the central oracle and the distributed solver.

``fit`` takes a :class:`~aggbne.game.GameSpec`; ``predict`` maps realized
types to the equilibrium actions of the fitted strategy tables.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError
from .game import GameSpec
from .network import GraphSchedule
from .solver import StepOptions, StepsizeSchedule, run
from .verification import central_dbne, exploitability


class _StrategyPredictor:
    def _check_game(self, game):
        if not isinstance(game, GameSpec):
            raise ConfigurationError(f"fit expects a GameSpec, got {type(game).__name__}")
        return game if self.N is None else game.with_N(self.N)

    def predict(self, types) -> np.ndarray:
        """Actions for realized types.

        Parameters
        ----------
        types : array-like of shape (n_samples, n_players)

        Returns
        -------
        ndarray of shape (n_samples, n_players, m)
        """
        check_is_fitted(self, "profile_")
        types = check_array(types, ensure_2d=True, dtype=float)
        n = self.profile_.shape[0]
        if types.shape[1] != n:
            raise ConfigurationError(f"expected {n} type columns, got {types.shape[1]}")
        idx = self.discretization_.grid.cell_index(types)
        return self.profile_[np.arange(n)[None, :], idx]


class CentralDBNE(_StrategyPredictor, BaseEstimator):
    """Equilibrium of the discretized game computed with the exact aggregate.

    Parameters
    ----------
    N : int, optional
        Grid size; defaults to the game's own ``N``.
    tol : float
        Exploitability the certificate must reach.
    max_iter : int
    init : str or array
        Initial profile rule passed to the projected-gradient loop.
    random_state : int

    Attributes
    ----------
    profile_ : ndarray of shape (n_players, N, m)
    certificate_ : ExploitabilityReport
    n_iter_ : int
    discretization_ : TypeDiscretization
    """

    def __init__(self, N=None, tol=1e-8, max_iter=100_000, init="midpoint", random_state=0):
        self.N = N
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.random_state = random_state

    def fit(self, game, y=None):
        spec = self._check_game(game)
        disc = spec.discretization
        result = central_dbne(spec, disc, self.tol, self.max_iter, init=self.init, seed=self.random_state)
        self.game_ = spec
        self.discretization_ = disc
        self.profile_ = result.profile
        self.certificate_ = result.certificate
        self.n_iter_ = result.n_iter
        return self


class DistributedBNESeeker(_StrategyPredictor, BaseEstimator):
    """Distributed projected-gradient seeking over a time-varying network.

    Parameters
    ----------
    N : int, optional
    mode : str
        Graph schedule mode (see :class:`~aggbne.network.GraphSchedule`).
    B : int, optional
        Connectivity window.
    T : int
        Number of rounds.
    a, b : float
        Stepsize ``a / (b + t)``.
    record_every : int
    init : str
    include_chain : bool
    n_jobs : int
        Threads used for the per-player gradients.
    reference : bool
        Also fit :class:`CentralDBNE` and record the distance to it.
    random_state : int
        Seeds the schedule and random initialization.

    Attributes
    ----------
    profile_, trace_, state_, discretization_
    reference_ : ndarray or None
    epsilon_ : float
        Exploitability of the final profile.
    """

    def __init__(
        self,
        N=None,
        mode="complete",
        B=None,
        T=50_000,
        a=2.0,
        b=10.0,
        record_every=100,
        init="midpoint",
        include_chain=True,
        n_jobs=1,
        reference=True,
        random_state=0,
    ):
        self.N = N
        self.mode = mode
        self.B = B
        self.T = T
        self.a = a
        self.b = b
        self.record_every = record_every
        self.init = init
        self.include_chain = include_chain
        self.n_jobs = n_jobs
        self.reference = reference
        self.random_state = random_state

    def fit(self, game, y=None):
        spec = self._check_game(game)
        disc = spec.discretization
        schedule = GraphSchedule(spec.n_players, self.mode, seed=self.random_state, B=self.B)
        oracle = central_dbne(spec, disc).profile if self.reference else None
        result = run(
            spec,
            schedule,
            StepsizeSchedule(self.a, self.b),
            self.T,
            disc=disc,
            record_every=self.record_every,
            oracle=oracle,
            init=self.init,
            seed=self.random_state,
            options=StepOptions(include_chain=self.include_chain),
            n_jobs=self.n_jobs,
        )
        self.game_ = spec
        self.discretization_ = disc
        self.schedule_ = schedule
        self.state_ = result.state
        self.trace_ = result.trace
        self.profile_ = result.state.strategies
        self.reference_ = oracle
        self.epsilon_ = exploitability(self.profile_, disc, spec).epsilon
        return self
