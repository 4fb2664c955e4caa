# Global imports
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np

from jumpfisher.errors import ConfigError, ModelModeError
from jumpfisher.model.lindblad_model import (
    LindbladModel,
    ParamKey,
    central_difference,
    default_dtheta,
    displace,
)
from jumpfisher.monitoring.monitoring_operator import init_monitor
from jumpfisher.quantum.superoperators import ModalPropagator, trace_row, vectorize
from jumpfisher.renewal.renewal_fisher import DENSITY_FLOOR
from jumpfisher.renewal.renewal_structure import RenewalStructure, check_renewal
from jumpfisher.trajectory.records import MeasurementRecord, Origin

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-300
CACHE_SIZE = 512


@dataclass(frozen=True, eq=False)
class ReplayPoint:
    """Exact propagators of the model and its derivative at one candidate value."""

    value: float
    labels: Tuple[str, ...]
    center: ModalPropagator
    plus: ModalPropagator
    minus: ModalPropagator
    dtheta: float
    jumps: Tuple[np.ndarray, ...]
    d_jumps: Tuple[np.ndarray, ...]
    jumps_plus: Tuple[np.ndarray, ...]
    jumps_minus: Tuple[np.ndarray, ...]
    rho0: np.ndarray
    xi0: np.ndarray

    def channel(self, label: str) -> int:
        if label not in self.labels:
            raise ConfigError(f"Record channel '{label}' is not monitored")
        return self.labels.index(label)


@dataclass(frozen=True)
class Replay:
    score: float
    loglik: float
    jumps: int


class ReplayKernel:
    """Replays records through the monitoring-operator recursion at candidate
    parameter values.

    Candidates are quantized to ``quantum`` before assembly so that nearby
    evaluations of an optimizer share one cached set of propagators.
    """

    def __init__(
        self,
        model: LindbladModel,
        param: Optional[ParamKey] = None,
        dtheta: Optional[float] = None,
        quantum: Optional[float] = None,
        initial_state: Optional[np.ndarray] = None,
    ):
        self.model = model
        self.index = model.param_index(param)
        self.param = model.param_names[self.index]
        self.dtheta = dtheta
        self.quantum = quantum
        self.initial_state = initial_state
        self._point = lru_cache(maxsize=CACHE_SIZE)(self._assemble)

    @property
    def origin(self) -> Origin:
        if self.initial_state is None and self.model.initial_state_at is None:
            return Origin.STEADY
        return Origin.INITIAL

    def theta(self, value: float) -> np.ndarray:
        theta = self.model.theta_vector.copy()
        theta[self.index] = value
        return theta

    def key(self, value: float) -> float:
        if not self.quantum:
            return float(value)
        return float(np.rint(value / self.quantum) * self.quantum)

    def point(self, value: float) -> ReplayPoint:
        return self._point(self.key(value))

    def _assemble(self, value: float) -> ReplayPoint:
        theta = self.theta(value)
        step = self.dtheta or default_dtheta(value)
        triple = displace(self.model, self.index, step, theta=theta)
        monitor = init_monitor(self.model, self.index, theta, step, self.initial_state)
        log.debug(f"Replay propagators for {self.param}={value:.8g}")
        return ReplayPoint(
            value=value,
            labels=triple.center.labels,
            center=ModalPropagator(triple.center.nojump),
            plus=ModalPropagator(triple.plus.nojump),
            minus=ModalPropagator(triple.minus.nojump),
            dtheta=triple.dtheta,
            jumps=tuple(jump.matrix for jump in triple.center.jumps),
            d_jumps=triple.d_jumps,
            jumps_plus=tuple(jump.matrix for jump in triple.plus.jumps),
            jumps_minus=tuple(jump.matrix for jump in triple.minus.jumps),
            rho0=vectorize(monitor.rho),
            xi0=vectorize(monitor.xi),
        )

    def replay(
        self,
        record: MeasurementRecord,
        value: float,
        conditioned: bool = False,
        include_final: bool = True,
    ) -> Replay:
        """tr xi and log-likelihood of ``record`` at ``value``.

        ``conditioned`` starts from the reset state of the first jump and
        drops the first waiting time, matching the renewal likelihood.
        """
        if not conditioned and record.origin not in (None, self.origin):
            raise ConfigError(
                f"Record {record.trajectory} starts from the {record.origin.value} "
                f"state but is replayed from the {self.origin.value} state"
            )
        point = self.point(value)
        row = trace_row(self.model.dim)
        jumps = record.jumps
        if conditioned:
            if not jumps:
                raise ConfigError("Conditioned replay needs at least one jump")
            rho, xi = _reset_state(point, point.channel(jumps[0].channel), row)
            jumps = jumps[1:]
        else:
            rho, xi = point.rho0, point.xi0
        loglik = 0.0

        for jump in jumps:
            k = point.channel(jump.channel)
            drifted = point.center.apply(rho, [jump.tau])[0]
            d_drifted = (
                point.plus.apply(rho, [jump.tau])[0]
                - point.minus.apply(rho, [jump.tau])[0]
            ) / (2.0 * point.dtheta) + point.center.apply(xi, [jump.tau])[0]
            image = point.jumps[k] @ drifted
            weight = float(np.real(row @ image))
            if weight < WEIGHT_FLOOR:
                return Replay(score=np.nan, loglik=-np.inf, jumps=len(jumps))
            xi = (point.d_jumps[k] @ drifted + point.jumps[k] @ d_drifted) / weight
            rho = image / weight
            loglik += np.log(weight)

        if include_final and record.final_stretch and not conditioned:
            stretch = record.final_stretch
            drifted = point.center.apply(rho, [stretch])[0]
            weight = float(np.real(row @ drifted))
            if weight < WEIGHT_FLOOR:
                return Replay(score=np.nan, loglik=-np.inf, jumps=len(jumps))
            d_drifted = (
                point.plus.apply(rho, [stretch])[0]
                - point.minus.apply(rho, [stretch])[0]
            ) / (2.0 * point.dtheta) + point.center.apply(xi, [stretch])[0]
            xi = d_drifted / weight
            loglik += np.log(weight)
        return Replay(
            score=float(np.real(row @ xi)), loglik=float(loglik), jumps=len(jumps)
        )


def _reset_state(point: ReplayPoint, channel: int, row: np.ndarray):
    identity = vectorize(np.eye(int(np.sqrt(row.size)), dtype=complex))

    def reset(jump: np.ndarray) -> np.ndarray:
        image = jump @ identity
        return image / np.real(row @ image)

    rho = reset(point.jumps[channel])
    xi = central_difference(
        reset(point.jumps_plus[channel]),
        reset(point.jumps_minus[channel]),
        point.dtheta,
    )
    return rho, xi


def replay_score(
    record: MeasurementRecord,
    model: LindbladModel,
    value: float,
    param: Optional[ParamKey] = None,
    initial_state: Optional[np.ndarray] = None,
    dtheta: Optional[float] = None,
) -> float:
    """tr xi of a record at ``value``, final no-jump stretch included."""
    kernel = ReplayKernel(model, param, dtheta, initial_state=initial_state)
    return kernel.replay(record, value).score


# ---------------- RENEWAL ----------------


class RenewalKernel:
    """Renewal structures of a model along one parameter, cached per value."""

    def __init__(
        self,
        model: LindbladModel,
        param: Optional[ParamKey] = None,
        quantum: Optional[float] = None,
    ):
        self.model = model
        self.index = model.param_index(param)
        self.param = model.param_names[self.index]
        self.quantum = quantum
        self._structure = lru_cache(maxsize=CACHE_SIZE)(self._build)

    def structure(self, value: float) -> RenewalStructure:
        key = float(value)
        if self.quantum:
            key = float(np.rint(value / self.quantum) * self.quantum)
        return self._structure(key)

    def _build(self, value: float) -> RenewalStructure:
        theta = self.model.theta_vector.copy()
        theta[self.index] = value
        self.model.check_theta(theta)
        verdict = check_renewal(self.model, theta)
        if not verdict:
            raise ModelModeError(str(verdict))
        return verdict


def loglik_renewal(
    record: MeasurementRecord,
    value: float,
    model: LindbladModel,
    param: Optional[ParamKey] = None,
    kernel: Optional[RenewalKernel] = None,
) -> float:
    """sum_{j >= 2} log W(tau_j, k_j | k_{j-1}); the first waiting time is dropped."""
    if len(record) < 2:
        raise ConfigError(
            f"Renewal likelihood needs at least 2 jumps, record {record.trajectory} "
            f"has {len(record)}"
        )
    kernel = kernel or RenewalKernel(model, param)
    structure = kernel.structure(value)
    labels = record.labels
    previous = np.array([structure.index(label) for label in labels[:-1]])
    current = np.array([structure.index(label) for label in labels[1:]])
    taus = record.taus[1:]

    densities = np.empty(len(taus))
    by_previous: Dict[int, np.ndarray] = {
        q: np.flatnonzero(previous == q) for q in np.unique(previous)
    }
    for q, positions in by_previous.items():
        columns = structure.wtd_columns(taus[positions], q)
        densities[positions] = columns[np.arange(len(positions)), current[positions]]

    if np.any(densities < DENSITY_FLOOR):
        position = int(np.flatnonzero(densities < DENSITY_FLOOR)[0])
        log.warning(
            f"Record {record.trajectory}: zero density for "
            f"{labels[position]} -> {labels[position + 1]} at "
            f"{kernel.param}={value:.6g}"
        )
        return -np.inf
    return float(np.sum(np.log(densities)))
