# Global imports
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm

from jumpfisher.errors import (
    AmbiguousSteadyStateError,
    DarkSubspaceError,
    ModelError,
    SteadyStateNotFoundError,
)
from jumpfisher.quantum.operators import dagger, hermitize, is_hermitian

STRUCTURE_TOL = 1e-10
STEADY_TOL = 1e-9
MODAL_COND_LIMIT = 1e6

# Density matrices are vectorized by stacking columns: vec(m)[i + d*j] = m[i, j].
# With this convention vec(A m B) = kron(B.T, A) vec(m).


def vectorize(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"Can only vectorize square matrices, got {matrix.shape}")
    return matrix.flatten(order="F")


def devectorize(vector: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    vector = np.asarray(vector).ravel()
    dim = dim or int(round(np.sqrt(vector.size)))
    if dim * dim != vector.size:
        raise ValueError(f"Vector of length {vector.size} is not a vectorized matrix")
    return vector.reshape((dim, dim), order="F")


def trace_row(dim: int) -> np.ndarray:
    """Row vector r with r @ vec(m) = tr m."""
    return vectorize(np.eye(dim, dtype=complex))


@dataclass(frozen=True, eq=False)
class Superoperator:
    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        size = self.dim * self.dim
        if self.matrix.shape != (size, size):
            raise ModelError(
                f"Superoperator on d={self.dim} needs a {size}x{size} matrix, "
                f"got {self.matrix.shape}"
            )

    @classmethod
    def identity(cls, dim: int) -> "Superoperator":
        return cls(dim=dim, matrix=np.eye(dim * dim, dtype=complex))

    @classmethod
    def zeros(cls, dim: int) -> "Superoperator":
        return cls(dim=dim, matrix=np.zeros((dim * dim, dim * dim), dtype=complex))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return devectorize(self.matrix @ vectorize(rho), self.dim)

    def trace_row(self) -> np.ndarray:
        """Row vector tr[S(.)] in vectorized form."""
        return trace_row(self.dim) @ self.matrix

    def _check(self, other: "Superoperator"):
        if other.dim != self.dim:
            raise ModelError(f"Dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Superoperator") -> "Superoperator":
        self._check(other)
        return Superoperator(dim=self.dim, matrix=self.matrix + other.matrix)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        self._check(other)
        return Superoperator(dim=self.dim, matrix=self.matrix - other.matrix)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        self._check(other)
        return Superoperator(dim=self.dim, matrix=self.matrix @ other.matrix)

    def __mul__(self, scalar: complex) -> "Superoperator":
        return Superoperator(dim=self.dim, matrix=scalar * self.matrix)

    __rmul__ = __mul__


def spre(operator: np.ndarray) -> np.ndarray:
    """Matrix of rho -> A rho."""
    dim = operator.shape[0]
    return np.kron(np.eye(dim), operator)


def spost(operator: np.ndarray) -> np.ndarray:
    """Matrix of rho -> rho B."""
    dim = operator.shape[0]
    return np.kron(operator.T, np.eye(dim))


def jump_superoperator(operator: np.ndarray, efficiency: float = 1.0) -> Superoperator:
    operator = np.asarray(operator, dtype=complex)
    if not 0.0 <= efficiency <= 1.0:
        raise ModelError(f"Efficiency must lie in [0, 1], got {efficiency}")
    return Superoperator(
        dim=operator.shape[0],
        matrix=efficiency * np.kron(operator.conj(), operator),
    )


def commutator_generator(hamiltonian: np.ndarray) -> np.ndarray:
    return -1j * (spre(hamiltonian) - spost(hamiltonian))


def dissipator(operator: np.ndarray) -> np.ndarray:
    rate_op = dagger(operator) @ operator
    return (
        np.kron(operator.conj(), operator) - 0.5 * spre(rate_op) - 0.5 * spost(rate_op)
    )


def _check_operators(hamiltonian: np.ndarray, jumps: Sequence[np.ndarray]) -> int:
    if hamiltonian.ndim != 2 or hamiltonian.shape[0] != hamiltonian.shape[1]:
        raise ModelError(f"Hamiltonian must be square, got {hamiltonian.shape}")
    if not is_hermitian(hamiltonian, STRUCTURE_TOL):
        raise ModelError("Hamiltonian is not Hermitian")
    dim = hamiltonian.shape[0]
    for index, operator in enumerate(jumps):
        if operator.shape != (dim, dim):
            raise ModelError(
                f"Jump operator {index} has shape {operator.shape}, expected "
                f"({dim}, {dim})"
            )
    return dim


def build_liouvillian(
    hamiltonian: np.ndarray, jumps: Iterable[np.ndarray]
) -> Superoperator:
    """Lindblad generator with rates absorbed in the jump operators."""
    hamiltonian = np.asarray(hamiltonian, dtype=complex)
    jumps = [np.asarray(operator, dtype=complex) for operator in jumps]
    dim = _check_operators(hamiltonian, jumps)

    matrix = commutator_generator(hamiltonian)
    for operator in jumps:
        matrix = matrix + dissipator(operator)
    return Superoperator(dim=dim, matrix=matrix)


def propagator(generator: Superoperator, t: float) -> Superoperator:
    if t < 0:
        raise ValueError(f"Propagation time must be non-negative, got {t}")
    return Superoperator(dim=generator.dim, matrix=expm(generator.matrix * t))


class ModalPropagator:
    """Evaluates exp(G t) at many times.

    Uses the eigendecomposition of G when its eigenvector matrix is well
    conditioned and falls back to ``scipy.linalg.expm`` point by point
    otherwise (exceptional points of non-normal generators).
    """

    def __init__(
        self,
        generator: Union[Superoperator, np.ndarray],
        cond_limit: Optional[float] = None,
    ):
        matrix = generator.matrix if isinstance(generator, Superoperator) else generator
        self.matrix_g = np.asarray(matrix, dtype=complex)
        self.size = self.matrix_g.shape[0]
        cond_limit = cond_limit or MODAL_COND_LIMIT

        eigenvalues, right = np.linalg.eig(self.matrix_g)
        condition = np.linalg.cond(right)
        self.is_modal = bool(np.isfinite(condition) and condition < cond_limit)
        self.eigenvalues = eigenvalues
        if self.is_modal:
            self._right = right
            self._left = np.linalg.inv(right)
        else:
            logging.debug(
                f"Generator eigenbasis condition {condition:.3g}, using expm fallback"
            )

    @staticmethod
    def _times(times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < 0):
            raise ValueError("Propagation times must be non-negative")
        return times

    def matrix(self, t: float) -> np.ndarray:
        return self.matrices([t])[0]

    def matrices(self, times) -> np.ndarray:
        """Stack of exp(G t) for every t, shape (T, n, n)."""
        times = self._times(times)
        if not self.is_modal:
            return np.array([expm(self.matrix_g * t) for t in times])
        phases = np.exp(np.outer(times, self.eigenvalues))
        return np.einsum("ij,tj,jk->tik", self._right, phases, self._left)

    def apply(self, column: np.ndarray, times) -> np.ndarray:
        """exp(G t) @ column for every t, shape (T, n)."""
        times = self._times(times)
        if not self.is_modal:
            return np.array([expm(self.matrix_g * t) @ column for t in times])
        weights = self._left @ column
        phases = np.exp(np.outer(times, self.eigenvalues))
        return (phases * weights) @ self._right.T

    def contract(self, rows: np.ndarray, column: np.ndarray, times) -> np.ndarray:
        """rows @ exp(G t) @ column, shape (T,) for one row or (T, K) for K rows."""
        rows = np.asarray(rows)
        single = rows.ndim == 1
        rows = np.atleast_2d(rows)
        times = self._times(times)
        if self.is_modal:
            left = rows @ self._right
            weights = self._left @ column
            phases = np.exp(np.outer(times, self.eigenvalues))
            values = phases @ (left * weights).T
        else:
            values = np.array(
                [rows @ (expm(self.matrix_g * t) @ column) for t in times]
            )
        return values[:, 0] if single else values


def steady_state(liouvillian: Superoperator) -> np.ndarray:
    """Unique null vector of a trace-preserving generator as a density matrix."""
    dim = liouvillian.dim
    eigenvalues = np.linalg.eigvals(liouvillian.matrix)
    null_count = int(np.sum(np.abs(eigenvalues) < STEADY_TOL))
    if null_count > 1:
        raise AmbiguousSteadyStateError(
            f"Liouvillian has {null_count} eigenvalues with modulus below "
            f"{STEADY_TOL}: the steady state is not unique"
        )
    if null_count == 0:
        smallest = np.min(np.abs(eigenvalues))
        raise SteadyStateNotFoundError(
            f"No null vector found (smallest eigenvalue modulus {smallest:.3g})"
        )

    size = dim * dim
    system = np.vstack([liouvillian.matrix, trace_row(dim)[None, :]])
    target = np.zeros(size + 1, dtype=complex)
    target[-1] = 1.0
    solution, *_ = np.linalg.lstsq(system, target, rcond=None)

    rho = hermitize(devectorize(solution, dim))
    rho = rho / np.trace(rho).real
    residual = np.max(np.abs(liouvillian.matrix @ vectorize(rho)))
    if residual > STEADY_TOL:
        raise SteadyStateNotFoundError(f"Steady-state residual {residual:.3g}")
    lowest = np.min(np.linalg.eigvalsh(rho))
    if lowest < -STEADY_TOL:
        logging.warning(f"Steady state has a negative eigenvalue {lowest:.3g}")
    return rho


def slowest_decay_rate(generator: Superoperator, tol: float = STRUCTURE_TOL) -> float:
    """Smallest |Re lambda| over the spectrum of a no-jump generator."""
    real_parts = np.linalg.eigvals(generator.matrix).real
    if np.any(real_parts > -tol):
        raise DarkSubspaceError(
            "No-jump generator has a non-decaying mode: some states never "
            "produce a monitored jump"
        )
    return float(np.min(-real_parts))


def is_trace_preserving(generator: Superoperator, tol: float = STRUCTURE_TOL) -> bool:
    return bool(np.max(np.abs(generator.trace_row())) <= tol)


def inverse(generator: Superoperator) -> np.ndarray:
    """Matrix of the inverse generator; a singular one signals a dark subspace."""
    try:
        inv = np.linalg.inv(generator.matrix)
    except np.linalg.LinAlgError as err:
        raise DarkSubspaceError("No-jump generator is not invertible") from err
    if not np.all(np.isfinite(inv)) or np.linalg.cond(generator.matrix) > 1e14:
        raise DarkSubspaceError("No-jump generator is numerically singular")
    return inv
