# Global imports
import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np

from jumpfisher.errors import AmbiguousSteadyStateError, DarkSubspaceError
from jumpfisher.model.lindblad_model import LindbladModel, Unraveling, assemble
from jumpfisher.quantum.superoperators import (
    ModalPropagator,
    inverse,
    slowest_decay_rate,
    steady_state,
    trace_row,
    vectorize,
)

RANK_TOL = 1e-10
SILENT_TOL = 1e-14
TAIL_TOL = 1e-10
PERRON_TOL = 1e-8
TAIL_START = 23.0

Channel = Union[str, int]


@dataclass(frozen=True)
class RenewalChannel:
    """Rank-one channel sqrt(eta) L = amplitude |post><pre|."""

    label: str
    amplitude: float
    post_state: np.ndarray
    pre_state: np.ndarray

    @property
    def rate(self) -> float:
        return self.amplitude**2

    @property
    def silent(self) -> bool:
        return self.amplitude**2 < SILENT_TOL

    @property
    def reset_state(self) -> np.ndarray:
        return self.post_state @ self.post_state.conj().T


@dataclass(frozen=True)
class NotRenewal:
    """Verdict of a failed renewal check; falsy."""

    model_name: str
    reasons: Tuple[str, ...]

    def __bool__(self) -> bool:
        return False

    def __str__(self) -> str:
        return f"{self.model_name} is not a renewal process: " + "; ".join(self.reasons)


@dataclass(frozen=True, eq=False)
class RenewalStructure:
    model: LindbladModel
    theta: np.ndarray
    unraveling: Unraveling
    channels: Tuple[RenewalChannel, ...]

    @property
    def labels(self) -> Tuple[str, ...]:
        return self.unraveling.labels

    @property
    def dim(self) -> int:
        return self.unraveling.dim

    def index(self, channel: Channel) -> int:
        if isinstance(channel, (int, np.integer)):
            return int(channel)
        return self.unraveling.index(channel)

    def with_unraveling(self, unraveling: Unraveling) -> "RenewalStructure":
        """Same channel structure on another assembled set (displaced copies)."""
        return replace(self, unraveling=unraveling)

    @cached_property
    def propagator(self) -> ModalPropagator:
        return ModalPropagator(self.unraveling.nojump)

    @cached_property
    def nojump_inverse(self) -> np.ndarray:
        return inverse(self.unraveling.nojump)

    @cached_property
    def reset_vectors(self) -> np.ndarray:
        """Row q is vec(sigma_q) with sigma_q = J_q(1) / tr J_q(1); zero if silent."""
        identity = vectorize(np.eye(self.dim, dtype=complex))
        vectors = []
        for jump in self.unraveling.jumps:
            image = jump.matrix @ identity
            weight = np.real(trace_row(self.dim) @ image)
            vectors.append(image / weight if weight > SILENT_TOL else 0.0 * image)
        return np.array(vectors)

    @cached_property
    def active(self) -> np.ndarray:
        return np.array([np.any(vector != 0) for vector in self.reset_vectors])

    @cached_property
    def decay_rate(self) -> float:
        return slowest_decay_rate(self.unraveling.nojump)

    @cached_property
    def oscillation_frequency(self) -> float:
        return float(np.max(np.abs(self.propagator.eigenvalues.imag), initial=0.0))

    def wtd(self, tau, k: Channel, q: Channel) -> np.ndarray:
        """W(tau, k|q) = tr[J_k exp(L0 tau) sigma_q]."""
        row = self.unraveling.jump_rows[self.index(k)]
        values = self.propagator.contract(row, self.reset_vectors[self.index(q)], tau)
        return np.real(values) if np.ndim(tau) else float(np.real(values[0]))

    def wtd_columns(self, tau, q: Channel) -> np.ndarray:
        """W(tau, k|q) for every k, shape (T, K)."""
        values = self.propagator.contract(
            self.unraveling.jump_rows, self.reset_vectors[self.index(q)], tau
        )
        return np.real(values)

    def survival(self, tau, q: Channel) -> np.ndarray:
        values = self.propagator.contract(
            trace_row(self.dim), self.reset_vectors[self.index(q)], tau
        )
        return np.real(values)

    def amplitude(self, tau, k: Channel, q: Channel) -> np.ndarray:
        """Psi(tau, k|q) = c_k <pre_k| exp(-i H_e tau) |post_q>."""
        if not self.unraveling.has_kraus:
            raise DarkSubspaceError(
                "Waiting-time amplitudes need every channel monitored at unit "
                "efficiency"
            )
        k, q = self.index(k), self.index(q)
        evolution = ModalPropagator(-1j * self.unraveling.effective_hamiltonian)
        bra = self.channels[k].amplitude * self.channels[k].pre_state.conj().T[0]
        values = evolution.contract(bra, self.channels[q].post_state[:, 0], tau)
        return values if np.ndim(tau) else values[0]

    def tail_time(
        self, tol: float = TAIL_TOL, moment: int = 0, max_doublings: int = 12
    ) -> float:
        """Time after which every reset state has survival below ``tol``.

        With ``moment`` the survival is weighted by (decay_rate * t)^moment,
        the decay of integrands carrying powers of the waiting time.
        """
        horizon = TAIL_START / self.decay_rate
        active = np.flatnonzero(self.active)
        for _ in range(max_doublings):
            tail = max(
                (float(self.survival([horizon], q)[0]) for q in active), default=0.0
            )
            tail *= (self.decay_rate * horizon) ** moment
            if tail < tol:
                return horizon
            horizon *= 2.0
        raise DarkSubspaceError(
            f"Survival stays above {tol} up to t={horizon:.3g}: waiting times "
            f"are not normalizable"
        )


def check_renewal(
    model: LindbladModel, theta: Optional[np.ndarray] = None
) -> Union[RenewalStructure, NotRenewal]:
    """Rank-one test of every monitored channel.

    A channel passes when its second singular value is below RANK_TOL times
    the first; zero operators count as silent channels.
    """
    theta = model.theta_vector if theta is None else np.asarray(theta, dtype=float)
    unraveling = assemble(model, theta)
    operators = dict(zip(model.labels, model.operators(theta)))
    channels = []
    reasons = []
    for label in unraveling.labels:
        channel = model.channel(label)
        operator = np.sqrt(channel.efficiency) * operators[label]
        left, singular, right_h = np.linalg.svd(operator)
        top = singular[0]
        if top**2 < SILENT_TOL:
            channels.append(
                RenewalChannel(
                    label=label,
                    amplitude=0.0,
                    post_state=left[:, :1],
                    pre_state=right_h[:1].conj().T,
                )
            )
            continue
        if singular.size > 1 and singular[1] >= RANK_TOL * top:
            rank = int(np.sum(singular >= RANK_TOL * top))
            reasons.append(f"channel '{label}' has rank {rank}")
            continue
        channels.append(
            RenewalChannel(
                label=label,
                amplitude=float(top),
                post_state=left[:, :1],
                pre_state=right_h[:1].conj().T,
            )
        )
    if not unraveling.labels:
        reasons.append("no monitored channel")
    if reasons:
        verdict = NotRenewal(model_name=model.name, reasons=tuple(reasons))
        logging.debug(str(verdict))
        return verdict
    return RenewalStructure(
        model=model, theta=theta, unraveling=unraveling, channels=tuple(channels)
    )


def wtd(structure: RenewalStructure, tau, k: Channel, q: Channel):
    return structure.wtd(tau, k, q)


@dataclass(frozen=True)
class ChannelChain:
    labels: Tuple[str, ...]
    transition: np.ndarray  # [k, q] = p(k|q)
    stationary: np.ndarray
    perron: np.ndarray
    activities: np.ndarray
    activity: float

    def probability(self, k: str, q: str) -> float:
        return float(self.transition[self.labels.index(k), self.labels.index(q)])


def transition_matrix(structure: RenewalStructure) -> np.ndarray:
    """p(k|q) = -tr[J_k L0^-1 sigma_q]."""
    inv = structure.nojump_inverse
    values = -np.real(structure.unraveling.jump_rows @ inv @ structure.reset_vectors.T)
    values[:, ~structure.active] = 0.0
    return values


def _perron_vector(transition: np.ndarray, active: np.ndarray) -> np.ndarray:
    sub = transition[np.ix_(active, active)]
    eigenvalues, eigenvectors = np.linalg.eig(sub)
    order = np.argsort(np.abs(eigenvalues - 1.0))
    if sub.shape[0] > 1 and abs(eigenvalues[order[1]] - 1.0) < PERRON_TOL:
        raise AmbiguousSteadyStateError("Channel chain is not ergodic")
    vector = np.real(eigenvectors[:, order[0]])
    vector = vector / vector.sum()
    perron = np.zeros(transition.shape[0])
    perron[active] = vector
    return perron


def channel_chain(structure: RenewalStructure) -> ChannelChain:
    transition = transition_matrix(structure)
    perron = _perron_vector(transition, structure.active)

    try:
        rho_ss = steady_state(structure.unraveling.liouvillian)
        activities = structure.unraveling.activities(rho_ss)
        activity = float(np.sum(activities))
        stationary = activities / activity
        mismatch = float(np.max(np.abs(stationary - perron)))
        if mismatch > PERRON_TOL:
            logging.warning(
                f"Stationary channel distribution from activities and from the "
                f"channel chain differ by {mismatch:.3g}"
            )
    except AmbiguousSteadyStateError:
        logging.debug("Steady state not unique, using the chain's Perron vector")
        stationary = perron
        mean_wait = -np.real(
            trace_row(structure.dim)
            @ structure.nojump_inverse
            @ structure.reset_vectors.T
        )
        activity = 1.0 / float(stationary @ mean_wait)
        activities = activity * stationary

    return ChannelChain(
        labels=structure.labels,
        transition=transition,
        stationary=stationary,
        perron=perron,
        activities=np.asarray(activities),
        activity=activity,
    )
