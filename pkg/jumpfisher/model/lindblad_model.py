# Global imports
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

from jumpfisher.errors import ModelError
from jumpfisher.quantum.operators import check_density_matrix, dagger
from jumpfisher.quantum.superoperators import (
    Superoperator,
    build_liouvillian,
    jump_superoperator,
    spost,
    spre,
    steady_state,
)

ParamKey = Union[str, int]
OperatorAt = Callable[[np.ndarray], np.ndarray]
DerivativeAt = Callable[[np.ndarray, int], np.ndarray]

UNIT_EFFICIENCY_TOL = 1e-12


def default_dtheta(value: float) -> float:
    return 1e-4 * max(1.0, abs(value))


@dataclass(frozen=True)
class JumpChannel:
    """One detector channel. ``operator_at`` returns L_k with its rate absorbed."""

    label: str
    operator_at: OperatorAt
    efficiency: float = 1.0
    monitored: bool = True
    derivative_at: Optional[DerivativeAt] = None

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ModelError(
                f"Channel '{self.label}': efficiency must lie in [0, 1], "
                f"got {self.efficiency}"
            )


@dataclass(frozen=True, eq=False)
class LindbladModel:
    name: str
    dim: int
    param_names: Tuple[str, ...]
    theta: Tuple[float, ...]
    hamiltonian_at: OperatorAt
    channels: Tuple[JumpChannel, ...]
    initial_state_at: Optional[OperatorAt] = None
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    hamiltonian_derivative_at: Optional[DerivativeAt] = None
    description: str = ""

    def __post_init__(self):
        if len(self.param_names) != len(self.theta):
            raise ModelError(
                f"{self.name}: {len(self.param_names)} parameter names for "
                f"{len(self.theta)} values"
            )
        labels = [channel.label for channel in self.channels]
        if len(set(labels)) != len(labels):
            raise ModelError(f"{self.name}: duplicated channel labels {labels}")
        self.check_theta(self.theta_vector)

    # ---------------- PARAMETERS ----------------

    @property
    def theta_vector(self) -> np.ndarray:
        return np.array(self.theta, dtype=float)

    @property
    def default_param(self) -> str:
        return self.param_names[0]

    @property
    def params(self) -> Dict[str, float]:
        return dict(zip(self.param_names, self.theta))

    def param_index(self, param: Optional[ParamKey] = None) -> int:
        if param is None:
            return 0
        if isinstance(param, (int, np.integer)):
            if not 0 <= param < len(self.param_names):
                raise ModelError(f"{self.name}: no parameter with index {param}")
            return int(param)
        if param not in self.param_names:
            raise ModelError(
                f"{self.name}: unknown parameter '{param}', "
                f"expected one of {list(self.param_names)}"
            )
        return self.param_names.index(param)

    def value(self, param: Optional[ParamKey] = None) -> float:
        return self.theta[self.param_index(param)]

    def check_theta(self, theta: np.ndarray):
        for name, value in zip(self.param_names, theta):
            if not np.isfinite(value):
                raise ModelError(f"{self.name}: parameter {name}={value} not finite")
            low, high = self.bounds.get(name, (-np.inf, np.inf))
            if not low <= value <= high:
                raise ModelError(
                    f"{self.name}: parameter {name}={value} outside its valid "
                    f"region [{low}, {high}]"
                )

    def with_theta(self, theta: Iterable[float]) -> "LindbladModel":
        return replace(self, theta=tuple(float(value) for value in theta))

    def with_params(
        self, values: Optional[Mapping[str, float]] = None, **kwargs
    ) -> "LindbladModel":
        theta = self.theta_vector
        for name, value in {**(values or {}), **kwargs}.items():
            theta[self.param_index(name)] = float(value)
        return self.with_theta(theta)

    def _theta(self, theta: Optional[np.ndarray]) -> np.ndarray:
        return self.theta_vector if theta is None else np.asarray(theta, dtype=float)

    # ---------------- OPERATORS ----------------

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(channel.label for channel in self.channels)

    @property
    def monitored_labels(self) -> Tuple[str, ...]:
        return tuple(channel.label for channel in self.channels if channel.monitored)

    @property
    def has_exact_derivatives(self) -> bool:
        return self.hamiltonian_derivative_at is not None and all(
            channel.derivative_at is not None for channel in self.channels
        )

    def channel(self, label: str) -> JumpChannel:
        for channel in self.channels:
            if channel.label == label:
                return channel
        raise ModelError(f"{self.name}: unknown channel '{label}'")

    def hamiltonian(self, theta: Optional[np.ndarray] = None) -> np.ndarray:
        return np.asarray(self.hamiltonian_at(self._theta(theta)), dtype=complex)

    def operators(self, theta: Optional[np.ndarray] = None) -> Tuple[np.ndarray, ...]:
        theta = self._theta(theta)
        return tuple(
            np.asarray(channel.operator_at(theta), dtype=complex)
            for channel in self.channels
        )

    def liouvillian(self, theta: Optional[np.ndarray] = None) -> Superoperator:
        theta = self._theta(theta)
        return build_liouvillian(self.hamiltonian(theta), self.operators(theta))

    def steady_state(self, theta: Optional[np.ndarray] = None) -> np.ndarray:
        return steady_state(self.liouvillian(theta))

    def initial_state(self, theta: Optional[np.ndarray] = None) -> np.ndarray:
        theta = self._theta(theta)
        if self.initial_state_at is None:
            return self.steady_state(theta)
        return check_density_matrix(self.initial_state_at(theta), "initial state")


@dataclass(frozen=True, eq=False)
class Unraveling:
    """Assembled superoperators of one model at one parameter point.

    ``jumps`` follows ``labels`` (the monitored channels). ``kraus`` holds the
    operators sqrt(eta_k) L_k and ``effective_hamiltonian`` the H_e with
    exp(L0 t) rho = V rho V^dagger, V = exp(-i H_e t); both are only present
    when every channel is monitored at unit efficiency.
    """

    dim: int
    labels: Tuple[str, ...]
    liouvillian: Superoperator
    nojump: Superoperator
    jumps: Tuple[Superoperator, ...]
    kraus: Optional[Tuple[np.ndarray, ...]] = None
    effective_hamiltonian: Optional[np.ndarray] = None

    @property
    def has_kraus(self) -> bool:
        return self.kraus is not None

    @cached_property
    def total_jump(self) -> Superoperator:
        total = Superoperator.zeros(self.dim)
        for jump in self.jumps:
            total = total + jump
        return total

    @cached_property
    def jump_rows(self) -> np.ndarray:
        """Row k gives tr[J_k(.)] in vectorized form."""
        if not self.jumps:
            return np.zeros((0, self.dim * self.dim), dtype=complex)
        return np.array([jump.trace_row() for jump in self.jumps])

    def index(self, label: str) -> int:
        if label not in self.labels:
            raise ModelError(f"Unknown monitored channel '{label}'")
        return self.labels.index(label)

    def jump(self, label: str) -> Superoperator:
        return self.jumps[self.index(label)]

    def activities(self, rho: np.ndarray) -> np.ndarray:
        """Per-channel jump rates tr[J_k rho]."""
        return np.real(self.jump_rows @ rho.flatten(order="F"))

    def merged(self, label: str = "jump") -> "Unraveling":
        """Single channel J = sum_k J_k: the label of each jump is discarded."""
        return Unraveling(
            dim=self.dim,
            labels=(label,),
            liouvillian=self.liouvillian,
            nojump=self.nojump,
            jumps=(self.total_jump,),
        )

    def shifted(self, direction: "Unraveling", step: float) -> "Unraveling":
        """First-order move along a derivative unraveling."""

        def move(center, slope):
            matrix = center.matrix + step * slope.matrix
            return Superoperator(dim=self.dim, matrix=matrix)

        kraus = None
        effective_hamiltonian = None
        if self.has_kraus and direction.has_kraus:
            kraus = tuple(k + step * dk for k, dk in zip(self.kraus, direction.kraus))
            effective_hamiltonian = (
                self.effective_hamiltonian + step * direction.effective_hamiltonian
            )
        return Unraveling(
            dim=self.dim,
            labels=self.labels,
            liouvillian=move(self.liouvillian, direction.liouvillian),
            nojump=move(self.nojump, direction.nojump),
            jumps=tuple(move(j, dj) for j, dj in zip(self.jumps, direction.jumps)),
            kraus=kraus,
            effective_hamiltonian=effective_hamiltonian,
        )


def _monitored_indices(
    model: LindbladModel, monitored_set: Optional[Iterable[str]]
) -> Tuple[int, ...]:
    if monitored_set is None:
        return tuple(i for i, channel in enumerate(model.channels) if channel.monitored)
    monitored_set = list(monitored_set)
    for label in monitored_set:
        model.channel(label)
    return tuple(i for i, label in enumerate(model.labels) if label in monitored_set)


def _kraus_available(model: LindbladModel, indices: Tuple[int, ...]) -> bool:
    return len(indices) == len(model.channels) and all(
        abs(channel.efficiency - 1.0) < UNIT_EFFICIENCY_TOL
        for channel in model.channels
    )


def build_nojump_generator(
    model: LindbladModel,
    monitored_set: Optional[Iterable[str]] = None,
    theta: Optional[np.ndarray] = None,
) -> Superoperator:
    """L0 = L - sum over monitored k of J_k, with J_k rho = eta_k L_k rho L_k^dagger."""
    return assemble(model, theta, monitored_set).nojump


def assemble(
    model: LindbladModel,
    theta: Optional[np.ndarray] = None,
    monitored_set: Optional[Iterable[str]] = None,
) -> Unraveling:
    theta = model._theta(theta)
    hamiltonian = model.hamiltonian(theta)
    operators = model.operators(theta)
    liouvillian = build_liouvillian(hamiltonian, operators)
    indices = _monitored_indices(model, monitored_set)

    jumps = tuple(
        jump_superoperator(operators[i], model.channels[i].efficiency) for i in indices
    )
    nojump = liouvillian
    for jump in jumps:
        nojump = nojump - jump

    kraus = None
    effective_hamiltonian = None
    if _kraus_available(model, indices):
        kraus = tuple(operators[i] for i in indices)
        effective_hamiltonian = hamiltonian - 0.5j * sum(
            (dagger(op) @ op for op in operators), np.zeros_like(hamiltonian)
        )

    return Unraveling(
        dim=model.dim,
        labels=tuple(model.channels[i].label for i in indices),
        liouvillian=liouvillian,
        nojump=nojump,
        jumps=jumps,
        kraus=kraus,
        effective_hamiltonian=effective_hamiltonian,
    )


def derivative_unraveling(
    model: LindbladModel, param: ParamKey, theta: Optional[np.ndarray] = None
) -> Unraveling:
    """Exact parameter derivatives of every assembled superoperator."""
    if not model.has_exact_derivatives:
        raise ModelError(f"{model.name} does not provide exact derivatives")
    index = model.param_index(param)
    theta = model._theta(theta)
    operators = model.operators(theta)
    d_hamiltonian = np.asarray(model.hamiltonian_derivative_at(theta, index), complex)
    d_operators = [
        np.asarray(channel.derivative_at(theta, index), dtype=complex)
        for channel in model.channels
    ]

    def d_sandwich(op, d_op):
        return np.kron(d_op.conj(), op) + np.kron(op.conj(), d_op)

    d_liouvillian = -1j * (spre(d_hamiltonian) - spost(d_hamiltonian))
    d_rate_total = np.zeros_like(d_hamiltonian)
    for op, d_op in zip(operators, d_operators):
        d_rate = dagger(d_op) @ op + dagger(op) @ d_op
        d_rate_total = d_rate_total + d_rate
        d_liouvillian = (
            d_liouvillian
            + d_sandwich(op, d_op)
            - 0.5 * spre(d_rate)
            - 0.5 * spost(d_rate)
        )

    indices = _monitored_indices(model, None)
    d_jumps = tuple(
        Superoperator(
            dim=model.dim,
            matrix=model.channels[i].efficiency
            * d_sandwich(operators[i], d_operators[i]),
        )
        for i in indices
    )
    d_nojump = d_liouvillian - sum((dj.matrix for dj in d_jumps), 0)

    kraus = None
    effective_hamiltonian = None
    if _kraus_available(model, indices):
        kraus = tuple(d_operators[i] for i in indices)
        effective_hamiltonian = d_hamiltonian - 0.5j * d_rate_total

    return Unraveling(
        dim=model.dim,
        labels=tuple(model.channels[i].label for i in indices),
        liouvillian=Superoperator(dim=model.dim, matrix=d_liouvillian),
        nojump=Superoperator(dim=model.dim, matrix=d_nojump),
        jumps=d_jumps,
        kraus=kraus,
        effective_hamiltonian=effective_hamiltonian,
    )


def central_difference(plus, minus, dtheta: float):
    """(plus - minus) / (2 dtheta) for arrays, superoperators or tuples of them."""
    if plus is None or minus is None:
        return None
    if isinstance(plus, tuple):
        return tuple(central_difference(p, m, dtheta) for p, m in zip(plus, minus))
    if isinstance(plus, Superoperator):
        return (plus.matrix - minus.matrix) / (2.0 * dtheta)
    return (np.asarray(plus) - np.asarray(minus)) / (2.0 * dtheta)


@dataclass(frozen=True, eq=False)
class DisplacedTriple:
    center: Unraveling
    plus: Unraveling
    minus: Unraveling
    dtheta: float
    param: str
    exact: bool = False

    @cached_property
    def d_nojump(self) -> np.ndarray:
        return central_difference(self.plus.nojump, self.minus.nojump, self.dtheta)

    @cached_property
    def d_liouvillian(self) -> np.ndarray:
        return central_difference(
            self.plus.liouvillian, self.minus.liouvillian, self.dtheta
        )

    @cached_property
    def d_jumps(self) -> Tuple[np.ndarray, ...]:
        return central_difference(self.plus.jumps, self.minus.jumps, self.dtheta)

    @cached_property
    def d_kraus(self) -> Optional[Tuple[np.ndarray, ...]]:
        return central_difference(self.plus.kraus, self.minus.kraus, self.dtheta)

    @cached_property
    def d_jump_rows(self) -> np.ndarray:
        return central_difference(
            self.plus.jump_rows, self.minus.jump_rows, self.dtheta
        )

    @property
    def has_kraus(self) -> bool:
        return self.center.has_kraus and self.plus.has_kraus and self.minus.has_kraus

    def merged(self, label: str = "jump") -> "DisplacedTriple":
        return replace(
            self,
            center=self.center.merged(label),
            plus=self.plus.merged(label),
            minus=self.minus.merged(label),
        )


def displace(
    model: LindbladModel,
    param: Optional[ParamKey] = None,
    dtheta: Optional[float] = None,
    theta: Optional[np.ndarray] = None,
    use_exact: bool = True,
    transform: Optional[Callable[[Unraveling], Unraveling]] = None,
) -> DisplacedTriple:
    """Assemble the model at theta and theta +- dtheta along one parameter.

    Models with exact derivative operators are displaced along their exact
    tangent, so central differences of the triple reproduce the exact
    derivatives. ``transform`` is applied to all three unravelings (for
    instance ``Unraveling.merged``).
    """
    index = model.param_index(param)
    theta = model._theta(theta).copy()
    dtheta = default_dtheta(theta[index]) if dtheta is None else float(dtheta)
    if dtheta <= 0:
        raise ModelError(f"Displacement must be positive, got {dtheta}")

    theta_plus, theta_minus = theta.copy(), theta.copy()
    theta_plus[index] += dtheta
    theta_minus[index] -= dtheta
    model.check_theta(theta)
    model.check_theta(theta_plus)
    model.check_theta(theta_minus)

    center = assemble(model, theta)
    exact = use_exact and model.has_exact_derivatives
    if exact:
        slope = derivative_unraveling(model, index, theta)
        plus = center.shifted(slope, dtheta)
        minus = center.shifted(slope, -dtheta)
    else:
        plus = assemble(model, theta_plus)
        minus = assemble(model, theta_minus)

    if transform is not None:
        center, plus, minus = transform(center), transform(plus), transform(minus)
    logging.debug(
        f"Displaced {model.name} along {model.param_names[index]} by {dtheta:.3g}"
        f"{' (exact tangent)' if exact else ''}"
    )
    return DisplacedTriple(
        center=center,
        plus=plus,
        minus=minus,
        dtheta=dtheta,
        param=model.param_names[index],
        exact=exact,
    )


def dynamical_activity(
    model: LindbladModel, theta: Optional[np.ndarray] = None
) -> float:
    """Steady-state number of monitored jumps per unit time."""
    unraveling = assemble(model, theta)
    rho_ss = steady_state(unraveling.liouvillian)
    return float(np.sum(unraveling.activities(rho_ss)))
