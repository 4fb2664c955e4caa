# Global imports
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from jumpfisher.errors import ConfigError, NonPositiveDefiniteError
from jumpfisher.model.lindblad_model import LindbladModel, ParamKey, Unraveling
from jumpfisher.monitoring.monitoring_operator import (
    MonitoringState,
    currents,
    drift_monitor,
    init_monitor,
    step_monitor,
)
from jumpfisher.trajectory.gillespie import JumpEvent, StopRule, run_ensemble
from jumpfisher.trajectory.records import Ensemble
from jumpfisher.trajectory.wtd_tables import (
    DerivativeTable,
    GridSpec,
    precompute_tables,
)

log = logging.getLogger(__name__)

EPOCHS = 201
PSD_STDERR_FACTOR = 3.0


def observation_grid(stop: StopRule, epochs: int = EPOCHS) -> np.ndarray:
    """Jump numbers 0..N for the N-ensemble, uniform times for the t_f one."""
    if stop.ensemble == Ensemble.JUMPS:
        return np.arange(stop.jumps + 1, dtype=float)
    return np.linspace(0.0, stop.time, epochs)


class ScoreListener:
    """Propagates one monitoring operator per parameter along a sampled record
    and reads tr xi (and optionally the currents) on the observation grid."""

    def __init__(
        self,
        initial: Sequence[MonitoringState],
        tables: Sequence[DerivativeTable],
        grid: np.ndarray,
        ensemble: Ensemble,
        with_rates: bool = False,
    ):
        self.initial = list(initial)
        self.tables = list(tables)
        self.grid = grid
        self.ensemble = ensemble
        self.with_rates = with_rates
        self.scores = np.zeros((len(self.tables), len(grid)))
        self.rates = np.zeros(len(grid)) if with_rates else None
        self.states: List[MonitoringState] = []
        self._next = 0

    def start(self, rho: np.ndarray) -> None:
        self.states = list(self.initial)
        self._next = 0
        if self.ensemble == Ensemble.JUMPS:
            self._record(self.states)
        else:
            self._observe_until(0.0, 0.0)

    def jump(self, event: JumpEvent) -> None:
        if self.ensemble == Ensemble.TIME:
            self._observe_until(event.time - event.tau, event.time, strict=True)
        self.states = [
            step_monitor(state, event.tau, event.channel, tables)
            for state, tables in zip(self.states, self.tables)
        ]
        if self.ensemble == Ensemble.JUMPS:
            self._record(self.states)

    def finish(self, rho: np.ndarray, stretch: float, time: float) -> None:
        if self.ensemble == Ensemble.TIME:
            self._observe_until(time - stretch, np.inf)

    @property
    def final_scores(self) -> np.ndarray:
        return self.scores[:, -1]

    def _observe_until(self, start: float, end: float, strict: bool = False) -> None:
        """Fill grid epochs in [start, end] (or [start, end) when ``strict``)."""
        while self._next < len(self.grid):
            epoch = self.grid[self._next]
            if epoch > end or (strict and epoch >= end):
                return
            offset = epoch - start
            drifted = (
                self.states
                if offset <= 0.0
                else [
                    drift_monitor(state, offset, tables)
                    for state, tables in zip(self.states, self.tables)
                ]
            )
            self._record(drifted)

    def _record(self, states: Sequence[MonitoringState]) -> None:
        for row, state in enumerate(states):
            self.scores[row, self._next] = state.trace_xi
        if self.with_rates:
            snapshot = currents(states[0], self.tables[0])
            self.rates[self._next] = snapshot.information_rate
        self._next += 1


@dataclass
class FisherEstimate:
    param: str
    ensemble: Ensemble
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    trajectories: int
    mean_score: np.ndarray
    score_stderr: np.ndarray
    scores: Optional[np.ndarray] = None

    @property
    def final(self) -> float:
        return float(self.mean[-1])

    @property
    def final_stderr(self) -> float:
        return float(self.stderr[-1])

    @property
    def series(self) -> Optional[np.ndarray]:
        """Per-trajectory stochastic information tr(xi)^2."""
        return None if self.scores is None else self.scores**2


def _check_trajectories(trajectories: int):
    if trajectories < 2:
        raise ConfigError(f"Need at least 2 trajectories, got {trajectories}")


def _stderr(samples: np.ndarray) -> np.ndarray:
    return np.std(samples, axis=0, ddof=1) / np.sqrt(samples.shape[0])


def monitor_ensemble(
    model: LindbladModel,
    params: Sequence[ParamKey],
    stop: StopRule,
    trajectories: int,
    seed: int,
    threads: int = 1,
    theta: Optional[np.ndarray] = None,
    grid: Optional[GridSpec] = None,
    dtheta: Optional[float] = None,
    epochs: int = EPOCHS,
    initial_state: Optional[np.ndarray] = None,
    transform: Optional[Callable[[Unraveling], Unraveling]] = None,
    with_rates: bool = False,
):
    """Sample records and propagate monitoring operators for every parameter.

    Returns the parameter names, the observation grid and the listeners in
    trajectory order.
    """
    names = [model.param_names[model.param_index(param)] for param in params]
    table = precompute_tables(
        model,
        grid,
        theta,
        params=dict.fromkeys(names),
        dtheta=dtheta,
        transform=transform,
        initial_state=initial_state,
    )
    initial = [
        init_monitor(model, name, theta, dtheta, initial_state) for name in names
    ]
    rho0 = initial[0].rho
    observation = observation_grid(stop, epochs)
    tables = [table.derivative(name) for name in names]

    def listener_factory(index: int) -> ScoreListener:
        return ScoreListener(initial, tables, observation, stop.ensemble, with_rates)

    results = run_ensemble(
        table, stop, trajectories, seed, rho0, threads, listener_factory
    )
    return names, observation, [listener for _, listener in results]


def gillespie_fisher(
    model: LindbladModel,
    stop: StopRule,
    trajectories: int,
    seed: int,
    param: Optional[ParamKey] = None,
    threads: int = 1,
    theta: Optional[np.ndarray] = None,
    grid: Optional[GridSpec] = None,
    dtheta: Optional[float] = None,
    epochs: int = EPOCHS,
    initial_state: Optional[np.ndarray] = None,
    transform: Optional[Callable[[Unraveling], Unraveling]] = None,
    keep_series: bool = False,
) -> FisherEstimate:
    """Monte Carlo Fisher information E[(tr xi)^2] on the observation grid."""
    _check_trajectories(trajectories)
    names, observation, listeners = monitor_ensemble(
        model,
        [param if param is not None else model.default_param],
        stop,
        trajectories,
        seed,
        threads,
        theta,
        grid,
        dtheta,
        epochs,
        initial_state,
        transform,
    )
    scores = np.array([listener.scores[0] for listener in listeners])
    information = scores**2
    estimate = FisherEstimate(
        param=names[0],
        ensemble=stop.ensemble,
        grid=observation,
        mean=information.mean(axis=0),
        stderr=_stderr(information),
        trajectories=trajectories,
        mean_score=scores.mean(axis=0),
        score_stderr=_stderr(scores),
        scores=scores if keep_series else None,
    )
    log.info(
        f"Gillespie-Fisher {model.name} about {estimate.param}: "
        f"{estimate.final:.6g} +- {estimate.final_stderr:.2g} ({trajectories} "
        f"trajectories, {stop})"
    )
    return estimate


@dataclass
class FisherMatrixEstimate:
    params: List[str]
    matrix: np.ndarray
    stderr: np.ndarray
    trajectories: int
    clamped: bool = False


def project_psd(matrix: np.ndarray, stderr: np.ndarray):
    """Clamp eigenvalues in (-3 stderr, 0) to zero; more negative ones fail."""
    eigenvalues, vectors = np.linalg.eigh(matrix)
    if eigenvalues.min() >= 0.0:
        return matrix, False
    tolerance = PSD_STDERR_FACTOR * float(np.max(stderr))
    if eigenvalues.min() < -tolerance:
        raise NonPositiveDefiniteError(
            f"Fisher matrix eigenvalue {eigenvalues.min():.3g} is below "
            f"-{tolerance:.3g}"
        )
    log.warning(
        f"Clamping Fisher matrix eigenvalue {eigenvalues.min():.3g} to zero "
        f"(Monte Carlo noise)"
    )
    clamped = (vectors * np.clip(eigenvalues, 0.0, None)) @ vectors.T
    return 0.5 * (clamped + clamped.T), True


def fisher_matrix(
    model: LindbladModel,
    params: Sequence[ParamKey],
    stop: StopRule,
    trajectories: int,
    seed: int,
    threads: int = 1,
    theta: Optional[np.ndarray] = None,
    grid: Optional[GridSpec] = None,
    dtheta: Optional[float] = None,
    initial_state: Optional[np.ndarray] = None,
) -> FisherMatrixEstimate:
    """[F]_ij = E[tr xi_i tr xi_j] with every xi propagated on the same records."""
    _check_trajectories(trajectories)
    if not params:
        raise ConfigError("Fisher matrix needs at least one parameter")
    names, _, listeners = monitor_ensemble(
        model,
        params,
        stop,
        trajectories,
        seed,
        threads,
        theta,
        grid,
        dtheta,
        initial_state=initial_state,
    )
    finals = np.array([listener.final_scores for listener in listeners])
    products = finals[:, :, None] * finals[:, None, :]
    matrix = products.mean(axis=0)
    matrix = 0.5 * (matrix + matrix.T)
    stderr = _stderr(products)
    matrix, clamped = project_psd(matrix, stderr)
    return FisherMatrixEstimate(
        params=names,
        matrix=matrix,
        stderr=stderr,
        trajectories=trajectories,
        clamped=clamped,
    )
