# Global imports
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np

from jumpfisher.errors import ConfigError, DarkSubspaceError, GridOverflowError
from jumpfisher.helpers import map_ordered
from jumpfisher.model.lindblad_model import LindbladModel, assemble
from jumpfisher.quantum.superoperators import (
    ModalPropagator,
    devectorize,
    trace_row,
    vectorize,
)
from jumpfisher.trajectory.records import Ensemble, Jump, MeasurementRecord, Origin
from jumpfisher.trajectory.rng_streams import trajectory_rng
from jumpfisher.trajectory.wtd_tables import GridSpec, WTDTable, precompute_tables

DARK_TOL = 1e-14


@dataclass(frozen=True)
class StopRule:
    jumps: Optional[int] = None
    time: Optional[float] = None

    def __post_init__(self):
        if (self.jumps is None) == (self.time is None):
            raise ConfigError("Give exactly one of a jump count and a final time")
        if self.jumps is not None and self.jumps < 1:
            raise ConfigError(f"Jump count must be at least 1, got {self.jumps}")
        if self.time is not None and not self.time > 0:
            raise ConfigError(f"Final time must be positive, got {self.time}")

    @property
    def ensemble(self) -> Ensemble:
        return Ensemble.JUMPS if self.jumps is not None else Ensemble.TIME

    def __str__(self) -> str:
        if self.jumps is not None:
            return f"{self.jumps} jumps"
        return f"t_f={self.time:g}"


@dataclass(frozen=True)
class JumpEvent:
    """One sampled jump; ``rho`` is the normalized state right after the
    previous jump and ``drifted`` its unnormalized no-jump evolution."""

    number: int
    tau: float
    channel: int
    label: str
    grid_index: int
    time: float
    rho: np.ndarray
    drifted: np.ndarray
    weights: np.ndarray
    rho_after: np.ndarray


class RecordListener(Protocol):
    def start(self, rho: np.ndarray) -> None:
        ...

    def jump(self, event: JumpEvent) -> None:
        ...

    def finish(self, rho: np.ndarray, stretch: float, time: float) -> None:
        ...


def invert_survival(
    times: np.ndarray, survival: np.ndarray, u: float
) -> Optional[float]:
    """First time where the tabulated survival drops to ``u``.

    Linear in S between grid points; None when S stays above ``u`` on the
    whole grid.
    """
    index = int(np.searchsorted(-survival, -u, side="left"))
    if index >= len(times):
        return None
    index = max(index, 1)
    upper, lower = survival[index - 1], survival[index]
    fraction = (upper - u) / (upper - lower) if upper > lower else 1.0
    spacing = times[index] - times[index - 1]
    tau = times[index - 1] + np.clip(fraction, 0.0, 1.0) * spacing
    return float(max(tau, np.finfo(float).tiny))


def sample_waiting_time(
    rho: np.ndarray,
    table: WTDTable,
    rng: np.random.Generator,
    horizon: Optional[float] = None,
) -> Optional[float]:
    """Waiting time drawn from W(tau|rho) by inverting the survival.

    Returns None when no jump happens before ``horizon``.
    """
    survival = table.survival(rho)
    u = rng.random()
    tau = invert_survival(table.times, survival, u)
    if tau is None:
        if horizon is not None and horizon <= table.t_max:
            return None
        raise GridOverflowError(
            f"Waiting time beyond t_max={table.t_max:.4g} (draw {u:.3g}, survival "
            f"{survival[-1]:.3g} at the grid end); use a longer grid"
        )
    if horizon is not None and tau > horizon:
        return None
    return tau


def sample_channel(weights: np.ndarray, rng: np.random.Generator) -> int:
    weights = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    total = weights.sum()
    if not np.any(weights >= DARK_TOL):
        raise DarkSubspaceError(
            f"Every channel weight is below {DARK_TOL}: the state is numerically dark"
        )
    cumulative = np.cumsum(weights / total)
    index = np.searchsorted(cumulative, rng.random(), side="right")
    return int(min(index, len(weights) - 1))


def simulate_record(
    table: WTDTable,
    stop: StopRule,
    rng: np.random.Generator,
    initial_state: np.ndarray,
    listener: Optional[RecordListener] = None,
    trajectory: int = 0,
    seed: Optional[int] = None,
    origin: Optional[Origin] = None,
) -> MeasurementRecord:
    """Gillespie sampling of one record.

    Conditional states are advanced with the propagator of the grid point
    nearest to the sampled waiting time and renormalized after every jump.
    """
    rho = initial_state
    elapsed = 0.0
    jumps: List[Jump] = []
    if listener is not None:
        listener.start(rho)

    while stop.jumps is None or len(jumps) < stop.jumps:
        horizon = None if stop.time is None else stop.time - elapsed
        tau = sample_waiting_time(rho, table, rng, horizon)
        if tau is None:
            break
        index = table.snap(tau)
        drifted = table.drift(rho, index)
        weights = table.jump_weights(drifted)
        channel = sample_channel(weights, rng)
        after = table.apply_jump(channel, drifted)
        after = after / np.real(np.trace(after))
        elapsed += tau
        jumps.append(Jump(tau=tau, channel=table.labels[channel]))
        if listener is not None:
            listener.jump(
                JumpEvent(
                    number=len(jumps),
                    tau=tau,
                    channel=channel,
                    label=table.labels[channel],
                    grid_index=index,
                    time=elapsed,
                    rho=rho,
                    drifted=drifted,
                    weights=weights,
                    rho_after=after,
                )
            )
        rho = after

    stretch = None if stop.time is None else stop.time - elapsed
    if listener is not None:
        listener.finish(rho, stretch or 0.0, elapsed + (stretch or 0.0))
    return MeasurementRecord(
        trajectory=trajectory,
        seed=seed,
        jumps=jumps,
        final_stretch=stretch,
        origin=origin,
    )


def run_ensemble(
    table: WTDTable,
    stop: StopRule,
    trajectories: int,
    seed: int,
    initial_state: np.ndarray,
    threads: int = 1,
    listener_factory: Optional[Callable[[int], RecordListener]] = None,
    origin: Optional[Origin] = None,
) -> List[Tuple[MeasurementRecord, Optional[RecordListener]]]:
    """Simulate ``trajectories`` records; trajectory i uses stream (seed, i)."""

    def worker(index: int):
        listener = listener_factory(index) if listener_factory is not None else None
        record = simulate_record(
            table,
            stop,
            trajectory_rng(seed, index),
            initial_state,
            listener=listener,
            trajectory=index,
            seed=seed,
            origin=origin,
        )
        return record, listener

    results = map_ordered(worker, trajectories, threads)
    jumps = sum(len(record) for record, _ in results)
    logging.info(
        f"Simulated {trajectories} trajectories of {table.model_name} ({stop}), "
        f"{jumps} jumps"
    )
    return results


def run_records(
    model: LindbladModel,
    stop: StopRule,
    trajectories: int,
    seed: int,
    threads: int = 1,
    theta: Optional[np.ndarray] = None,
    grid: Optional[GridSpec] = None,
    initial_state: Optional[np.ndarray] = None,
) -> List[MeasurementRecord]:
    origin = Origin.INITIAL
    if initial_state is None:
        initial_state = model.initial_state(theta)
        if model.initial_state_at is None:
            origin = Origin.STEADY
    table = precompute_tables(model, grid, theta, initial_state=initial_state)
    results = run_ensemble(
        table, stop, trajectories, seed, initial_state, threads, origin=origin
    )
    return [record for record, _ in results]


def record_probability(
    model: LindbladModel,
    record: MeasurementRecord,
    initial_state: Optional[np.ndarray] = None,
    theta: Optional[np.ndarray] = None,
    include_final: bool = True,
) -> Tuple[float, float]:
    """Probability density of a record and its logarithm.

    The logarithm accumulates the log-trace of each step on normalized
    states; a t_f record also carries the survival of its final stretch.
    """
    unraveling = assemble(model, theta)
    if initial_state is None:
        initial_state = model.initial_state(theta)
    propagator = ModalPropagator(unraveling.nojump)
    row = trace_row(model.dim)
    vector = vectorize(initial_state)
    log_value = 0.0
    for jump in record.jumps:
        drifted = propagator.apply(vector, [jump.tau])[0]
        image = unraveling.jump(jump.channel).matrix @ drifted
        weight = float(np.real(row @ image))
        if weight <= 0.0:
            return 0.0, -np.inf
        log_value += np.log(weight)
        vector = image / weight
    if include_final and record.final_stretch:
        drifted = propagator.apply(vector, [record.final_stretch])[0]
        survival = float(np.real(row @ drifted))
        if survival <= 0.0:
            return 0.0, -np.inf
        log_value += np.log(survival)
    return float(np.exp(log_value)), float(log_value)


def conditional_states(
    model: LindbladModel,
    record: MeasurementRecord,
    initial_state: Optional[np.ndarray] = None,
    theta: Optional[np.ndarray] = None,
) -> List[np.ndarray]:
    """Normalized post-jump states along a record, starting with rho_0."""
    unraveling = assemble(model, theta)
    rho = model.initial_state(theta) if initial_state is None else initial_state
    propagator = ModalPropagator(unraveling.nojump)
    states = [rho]
    for jump in record.jumps:
        drifted = propagator.apply(vectorize(rho), [jump.tau])[0]
        image = devectorize(unraveling.jump(jump.channel).matrix @ drifted, model.dim)
        rho = image / np.real(np.trace(image))
        states.append(rho)
    return states
