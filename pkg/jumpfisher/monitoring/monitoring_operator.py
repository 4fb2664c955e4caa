# Global imports
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from jumpfisher.errors import UnderflowError
from jumpfisher.model.lindblad_model import LindbladModel, ParamKey, default_dtheta
from jumpfisher.renewal.renewal_fisher import information_density
from jumpfisher.trajectory.wtd_tables import DerivativeTable

UNDERFLOW_TOL = 1e-300


@dataclass(frozen=True)
class MonitoringState:
    """Conditional state and monitoring operator along one trajectory.

    ``xi`` is the parameter derivative of the unnormalized conditional state
    divided by its trace, so tr xi is the score of the record so far.
    """

    rho: np.ndarray
    xi: np.ndarray
    t: float = 0.0
    jumps_seen: int = 0

    @property
    def trace_xi(self) -> float:
        return float(np.real(np.trace(self.xi)))

    @property
    def d_rho(self) -> np.ndarray:
        """Derivative of the normalized conditional state."""
        return self.xi - self.rho * self.trace_xi


def init_monitor(
    model: LindbladModel,
    param: Optional[ParamKey] = None,
    theta: Optional[np.ndarray] = None,
    dtheta: Optional[float] = None,
    initial_state: Optional[np.ndarray] = None,
) -> MonitoringState:
    """rho_0 and xi_0 = d rho_0 / d theta (zero for a fixed initial state)."""
    theta = model.theta_vector if theta is None else np.asarray(theta, dtype=float)
    if initial_state is not None:
        rho = np.asarray(initial_state, dtype=complex)
        return MonitoringState(rho=rho, xi=np.zeros_like(rho))
    index = model.param_index(param)
    step = default_dtheta(theta[index]) if dtheta is None else dtheta
    theta_plus, theta_minus = theta.copy(), theta.copy()
    theta_plus[index] += step
    theta_minus[index] -= step
    model.check_theta(theta_plus)
    model.check_theta(theta_minus)
    rho = model.initial_state(theta)
    xi = (model.initial_state(theta_plus) - model.initial_state(theta_minus)) / (
        2.0 * step
    )
    return MonitoringState(rho=rho, xi=xi)


def step_monitor(
    state: MonitoringState, tau: float, channel: int, tables: DerivativeTable
) -> MonitoringState:
    """Advance (rho, xi) over a waiting time ``tau`` ending in ``channel``."""
    table = tables.table
    index = table.snap(tau)
    image = table.apply_jump(channel, table.drift(state.rho, index))
    weight = float(np.real(np.trace(image)))
    if weight < UNDERFLOW_TOL:
        raise UnderflowError(
            f"Jump '{table.labels[channel]}' after tau={tau:.4g} has weight "
            f"{weight:.3g}"
        )
    xi = tables.jump_derivative(channel, state.rho, state.xi, index)
    return MonitoringState(
        rho=image / weight,
        xi=xi / weight,
        t=state.t + tau,
        jumps_seen=state.jumps_seen + 1,
    )


def drift_monitor(
    state: MonitoringState, offset: float, tables: DerivativeTable
) -> MonitoringState:
    """(rho, xi) after ``offset`` without a jump; the survival enters the score."""
    table = tables.table
    index = table.snap(offset)
    drifted = table.drift(state.rho, index)
    weight = float(np.real(np.trace(drifted)))
    if weight < UNDERFLOW_TOL:
        raise UnderflowError(
            f"Survival {weight:.3g} after a no-jump stretch {offset:.4g}"
        )
    xi = tables.drift_derivative(state.rho, state.xi, index)
    return replace(state, rho=drifted / weight, xi=xi / weight, t=state.t + offset)


@dataclass(frozen=True)
class CurrentSnapshot:
    """Per-channel currents I_k = tr[J_k rho_c] (jumps per unit time) and
    their parameter derivatives at one instant."""

    labels: Tuple[str, ...]
    currents: np.ndarray
    d_currents: np.ndarray

    @property
    def information_rate(self) -> float:
        return float(np.sum(information_density(self.currents, self.d_currents)))


def currents(state: MonitoringState, tables: DerivativeTable) -> CurrentSnapshot:
    table = tables.table
    values = table.jump_weights(state.rho)
    # d I_k = tr[(d J_k) rho_c] + tr[J_k d rho_c]
    slopes = tables.d_jump_weights(state.rho) + table.jump_weights(state.d_rho)
    return CurrentSnapshot(
        labels=table.labels, currents=np.clip(values, 0.0, None), d_currents=slopes
    )
