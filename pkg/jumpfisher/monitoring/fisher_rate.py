# Global imports
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.stats import linregress

from jumpfisher.errors import ConfigError
from jumpfisher.model.lindblad_model import LindbladModel, ParamKey
from jumpfisher.monitoring.gillespie_fisher import (
    EPOCHS,
    FisherEstimate,
    monitor_ensemble,
)
from jumpfisher.trajectory.gillespie import StopRule
from jumpfisher.trajectory.wtd_tables import GridSpec

log = logging.getLogger(__name__)


@dataclass
class FisherRateEstimate:
    param: str
    epochs: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    trajectories: int
    long_time_average: float
    long_time_stderr: float


def fisher_rate(
    model: LindbladModel,
    trajectories: int,
    horizon: float,
    seed: int,
    param: Optional[ParamKey] = None,
    threads: int = 1,
    theta: Optional[np.ndarray] = None,
    grid: Optional[GridSpec] = None,
    dtheta: Optional[float] = None,
    epochs: int = EPOCHS,
    initial_state: Optional[np.ndarray] = None,
) -> FisherRateEstimate:
    """dF/dt = sum_k E[(d I_k)^2 / I_k] sampled on a uniform time grid.

    The long-time average is taken per trajectory over the second half of
    the horizon and then averaged over trajectories.
    """
    if trajectories < 2:
        raise ConfigError(f"Need at least 2 trajectories, got {trajectories}")
    names, observation, listeners = monitor_ensemble(
        model,
        [param if param is not None else model.default_param],
        StopRule(time=horizon),
        trajectories,
        seed,
        threads,
        theta,
        grid,
        dtheta,
        epochs,
        initial_state,
        with_rates=True,
    )
    rates = np.array([listener.rates for listener in listeners])
    late = observation >= 0.5 * horizon
    per_trajectory = rates[:, late].mean(axis=1)
    estimate = FisherRateEstimate(
        param=names[0],
        epochs=observation,
        mean=rates.mean(axis=0),
        stderr=np.std(rates, axis=0, ddof=1) / np.sqrt(trajectories),
        trajectories=trajectories,
        long_time_average=float(per_trajectory.mean()),
        long_time_stderr=float(per_trajectory.std(ddof=1) / np.sqrt(trajectories)),
    )
    log.info(
        f"Fisher rate {model.name} about {estimate.param}: "
        f"{estimate.long_time_average:.6g} +- {estimate.long_time_stderr:.2g}"
    )
    return estimate


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float


def asymptotic_rate(
    estimate: FisherEstimate, window: Optional[Tuple[float, float]] = None
) -> LinearFit:
    """Least-squares line through the mean information curve over ``window``
    (default: second half of the grid)."""
    grid = estimate.grid
    if window is None:
        window = (0.5 * grid[-1], grid[-1])
    selected = (grid >= window[0]) & (grid <= window[1])
    if np.count_nonzero(selected) < 3:
        raise ConfigError(f"Fit window {window} holds fewer than 3 grid points")
    fit = linregress(grid[selected], estimate.mean[selected])
    return LinearFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue**2),
        slope_stderr=float(fit.stderr),
    )
