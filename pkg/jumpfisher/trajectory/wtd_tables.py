# Global imports
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional

import numpy as np

from jumpfisher.errors import (
    AmbiguousSteadyStateError,
    GridOverflowError,
    SteadyStateNotFoundError,
)
from jumpfisher.model.lindblad_model import (
    DisplacedTriple,
    LindbladModel,
    ParamKey,
    Unraveling,
    assemble,
    displace,
)
from jumpfisher.quantum.superoperators import (
    ModalPropagator,
    devectorize,
    slowest_decay_rate,
    steady_state,
    trace_row,
    vectorize,
)

log = logging.getLogger(__name__)

GRID_POINTS = 2000
DECAY_LENGTHS = 20.0
TAIL_TOL = 1e-8
MEAN_WAIT_FACTOR = 10.0
# propagator stacks above this many entries are evaluated point by point
STACK_LIMIT = 4_000_000


@dataclass(frozen=True)
class GridSpec:
    points: int = GRID_POINTS
    t_max: Optional[float] = None

    def resolve(self, decay_rate: float) -> "GridSpec":
        if self.t_max is not None:
            return self
        return GridSpec(points=self.points, t_max=DECAY_LENGTHS / decay_rate)

    def doubled(self) -> "GridSpec":
        return GridSpec(points=2 * self.points - 1, t_max=2.0 * self.t_max)

    @property
    def spacing(self) -> float:
        return self.t_max / (self.points - 1)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.points)


class WTDTable:
    """No-jump propagation tabulated on a uniform time grid.

    Conditional states are density matrices; subclasses decide how the
    no-jump evolution and the jumps act on them.
    """

    def __init__(self, unraveling: Unraveling, grid: GridSpec, model_name: str = ""):
        self.unraveling = unraveling
        self.grid = grid
        self.times = grid.times()
        self.labels = unraveling.labels
        self.dim = unraveling.dim
        self.model_name = model_name
        self.derivatives: Dict[str, "DerivativeTable"] = {}

    @property
    def t_max(self) -> float:
        return self.grid.t_max

    def snap(self, tau: float) -> int:
        return int(np.clip(np.rint(tau / self.grid.spacing), 0, self.grid.points - 1))

    def survival(self, rho: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def drift(self, rho: np.ndarray, index: int) -> np.ndarray:
        raise NotImplementedError

    def jump_weights(self, rho: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_jump(self, channel: int, rho: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, param: Optional[str] = None) -> "DerivativeTable":
        if param is None:
            return next(iter(self.derivatives.values()))
        return self.derivatives[param]


class SuperoperatorTable(WTDTable):
    def __init__(self, unraveling: Unraveling, grid: GridSpec, model_name: str = ""):
        super().__init__(unraveling, grid, model_name)
        self.propagator_g = ModalPropagator(unraveling.nojump)
        transposed = ModalPropagator(unraveling.nojump.matrix.T)
        # row t: tr[exp(L0 T_t) (.)]
        self.survival_rows = transposed.apply(trace_row(self.dim), self.times)
        size = self.dim**4 * grid.points
        self._stack = (
            self.propagator_g.matrices(self.times) if size <= STACK_LIMIT else None
        )
        self._cache: Dict[int, np.ndarray] = {}

    def propagator(self, index: int) -> np.ndarray:
        if self._stack is not None:
            return self._stack[index]
        if index not in self._cache:
            self._cache[index] = self.propagator_g.matrix(self.times[index])
        return self._cache[index]

    def survival(self, rho: np.ndarray) -> np.ndarray:
        return np.real(self.survival_rows @ vectorize(rho))

    def drift(self, rho: np.ndarray, index: int) -> np.ndarray:
        return devectorize(self.propagator(index) @ vectorize(rho), self.dim)

    def jump_weights(self, rho: np.ndarray) -> np.ndarray:
        return np.real(self.unraveling.jump_rows @ vectorize(rho))

    def apply_jump(self, channel: int, rho: np.ndarray) -> np.ndarray:
        vector = self.unraveling.jumps[channel].matrix @ vectorize(rho)
        return devectorize(vector, self.dim)


class KrausTable(WTDTable):
    """State-matrix path: exp(L0 t) rho = V rho V^dagger with V = exp(-i H_e t)."""

    def __init__(self, unraveling: Unraveling, grid: GridSpec, model_name: str = ""):
        super().__init__(unraveling, grid, model_name)
        self.kraus = np.array(unraveling.kraus)
        generator = -1j * unraveling.effective_hamiltonian
        self.evolution = ModalPropagator(generator).matrices(self.times)
        self.survival_kernels = np.einsum(
            "tji,tjk->tik", self.evolution.conj(), self.evolution
        )

    def survival(self, rho: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("tij,ji->t", self.survival_kernels, rho))

    def drift(self, rho: np.ndarray, index: int) -> np.ndarray:
        evolution = self.evolution[index]
        return evolution @ rho @ evolution.conj().T

    def jump_weights(self, rho: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("kij,jl,kil->k", self.kraus, rho, self.kraus.conj()))

    def apply_jump(self, channel: int, rho: np.ndarray) -> np.ndarray:
        kraus = self.kraus[channel]
        return kraus @ rho @ kraus.conj().T


# ---------------- DERIVATIVE TABLES ----------------


class DerivativeTable:
    """Parameter derivatives of the tabulated no-jump and jump maps."""

    def __init__(self, table: WTDTable, triple: DisplacedTriple):
        self.table = table
        self.param = triple.param
        self.dtheta = triple.dtheta

    def drift_derivative(self, rho, xi, index: int) -> np.ndarray:
        """d[exp(L0 t)] rho + exp(L0 t) xi."""
        raise NotImplementedError

    def jump_derivative(self, channel: int, rho, xi, index: int) -> np.ndarray:
        """d[J_k exp(L0 t)] rho + J_k exp(L0 t) xi."""
        raise NotImplementedError

    def d_jump_weights(self, rho: np.ndarray) -> np.ndarray:
        """tr[(d J_k) rho] for every channel."""
        raise NotImplementedError


class SuperoperatorDerivative(DerivativeTable):
    def __init__(self, table: SuperoperatorTable, triple: DisplacedTriple):
        super().__init__(table, triple)
        self.plus = ModalPropagator(triple.plus.nojump)
        self.minus = ModalPropagator(triple.minus.nojump)
        self.d_jumps = triple.d_jumps
        self.d_jump_rows = triple.d_jump_rows
        self._cache: Dict[int, np.ndarray] = {}

    def d_propagator(self, index: int) -> np.ndarray:
        if index not in self._cache:
            t = self.table.times[index]
            self._cache[index] = (self.plus.matrix(t) - self.minus.matrix(t)) / (
                2.0 * self.dtheta
            )
        return self._cache[index]

    def delta(self, channel: int, index: int) -> np.ndarray:
        jump = self.table.unraveling.jumps[channel].matrix
        return self.d_jumps[channel] @ self.table.propagator(index) + jump @ (
            self.d_propagator(index)
        )

    def drift_derivative(self, rho, xi, index: int) -> np.ndarray:
        vector = self.d_propagator(index) @ vectorize(rho) + self.table.propagator(
            index
        ) @ vectorize(xi)
        return devectorize(vector, self.table.dim)

    def jump_derivative(self, channel: int, rho, xi, index: int) -> np.ndarray:
        jump = self.table.unraveling.jumps[channel].matrix
        vector = self.delta(channel, index) @ vectorize(rho) + jump @ (
            self.table.propagator(index) @ vectorize(xi)
        )
        return devectorize(vector, self.table.dim)

    def d_jump_weights(self, rho: np.ndarray) -> np.ndarray:
        return np.real(self.d_jump_rows @ vectorize(rho))


class KrausDerivative(DerivativeTable):
    def __init__(self, table: KrausTable, triple: DisplacedTriple):
        super().__init__(table, triple)
        plus = ModalPropagator(-1j * triple.plus.effective_hamiltonian)
        minus = ModalPropagator(-1j * triple.minus.effective_hamiltonian)
        difference = plus.matrices(table.times) - minus.matrices(table.times)
        self.d_evolution = difference / (2.0 * self.dtheta)
        self.d_kraus = np.array(triple.d_kraus)

    def delta(self, channel: int, index: int) -> np.ndarray:
        return (
            self.d_kraus[channel] @ self.table.evolution[index]
            + self.table.kraus[channel] @ self.d_evolution[index]
        )

    def drift_derivative(self, rho, xi, index: int) -> np.ndarray:
        evolution = self.table.evolution[index]
        d_evolution = self.d_evolution[index]
        cross = d_evolution @ rho @ evolution.conj().T
        return cross + cross.conj().T + evolution @ xi @ evolution.conj().T

    def jump_derivative(self, channel: int, rho, xi, index: int) -> np.ndarray:
        step = self.table.kraus[channel] @ self.table.evolution[index]
        delta = self.delta(channel, index)
        cross = delta @ rho @ step.conj().T
        return step @ xi @ step.conj().T + cross + cross.conj().T

    def d_jump_weights(self, rho: np.ndarray) -> np.ndarray:
        cross = np.einsum("kij,jl,kil->k", self.d_kraus, rho, self.table.kraus.conj())
        return 2.0 * np.real(cross)


# ---------------- PRECOMPUTE ----------------


def _build(unraveling: Unraveling, grid: GridSpec, model_name: str) -> WTDTable:
    if unraveling.has_kraus:
        return KrausTable(unraveling, grid, model_name)
    return SuperoperatorTable(unraveling, grid, model_name)


def _mean_wait(unraveling: Unraveling) -> Optional[float]:
    try:
        rho_ss = steady_state(unraveling.liouvillian)
    except (AmbiguousSteadyStateError, SteadyStateNotFoundError):
        return None
    activity = float(np.sum(unraveling.activities(rho_ss)))
    return 1.0 / activity if activity > 0 else None


def _grid_problem(table: WTDTable, probes: Iterable[np.ndarray], mean_wait) -> str:
    # tr[exp(L0 t) 1] bounds the survival of every state
    tail = max(float(table.survival(probe)[-1]) for probe in probes)
    if tail > TAIL_TOL:
        return f"survival {tail:.3g} at t_max={table.t_max:.4g}"
    if mean_wait is not None and table.t_max < MEAN_WAIT_FACTOR * mean_wait:
        return f"t_max={table.t_max:.4g} below {MEAN_WAIT_FACTOR} mean waiting times"
    return ""


def precompute_tables(
    model: LindbladModel,
    grid: Optional[GridSpec] = None,
    theta: Optional[np.ndarray] = None,
    params: Iterable[ParamKey] = (),
    dtheta: Optional[float] = None,
    transform: Optional[Callable[[Unraveling], Unraveling]] = None,
    initial_state: Optional[np.ndarray] = None,
) -> WTDTable:
    """Tabulate the no-jump propagation of ``model`` and, for every parameter
    in ``params``, its derivative tables.

    The grid defaults to GRID_POINTS points up to DECAY_LENGTHS slowest decay
    times of L0 and is doubled once if the survival tail or the mean waiting
    time demand it.
    """
    center = assemble(model, theta)
    if transform is not None:
        center = transform(center)
    grid = (grid or GridSpec()).resolve(slowest_decay_rate(center.nojump))
    mean_wait = _mean_wait(center)
    probes = [np.eye(model.dim, dtype=complex)]
    if initial_state is not None:
        probes.append(initial_state)

    table = _build(center, grid, model.name)
    problem = _grid_problem(table, probes, mean_wait)
    if problem:
        log.info(f"Grid too short ({problem}), doubling t_max")
        table = _build(center, grid.doubled(), model.name)
        problem = _grid_problem(table, probes, mean_wait)
        if problem:
            raise GridOverflowError(f"Waiting-time grid still too short: {problem}")

    for param in params:
        triple = displace(model, param, dtheta, theta=theta, transform=transform)
        if isinstance(table, KrausTable):
            table.derivatives[triple.param] = KrausDerivative(table, triple)
        else:
            table.derivatives[triple.param] = SuperoperatorDerivative(table, triple)
    path = " (Kraus path)" if isinstance(table, KrausTable) else ""
    derivatives = ", ".join(table.derivatives)
    log.info(
        f"Tables for {model.name}: {table.grid.points} points up to "
        f"t={table.t_max:.4g}{path}"
        f"{', derivatives ' + derivatives if derivatives else ''}"
    )
    return table
