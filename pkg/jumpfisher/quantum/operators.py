# Global imports
from typing import Callable, Optional

import numpy as np

from jumpfisher.errors import ModelError

HERMITIAN_TOL = 1e-10

# Qubit basis ordering: index 0 is the excited state |e>, index 1 the ground |g>.


def sigma_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def sigma_y() -> np.ndarray:
    return np.array([[0, -1j], [1j, 0]], dtype=complex)


def sigma_z() -> np.ndarray:
    return np.array([[1, 0], [0, -1]], dtype=complex)


def sigma_plus() -> np.ndarray:
    """|e><g|"""
    return np.array([[0, 1], [0, 0]], dtype=complex)


def sigma_minus() -> np.ndarray:
    """|g><e|"""
    return np.array([[0, 0], [1, 0]], dtype=complex)


def destroy(levels: int) -> np.ndarray:
    """Truncated annihilation operator on Fock levels 0..levels-1."""
    return np.diag(np.sqrt(np.arange(1, levels)), k=1).astype(complex)


def number(levels: int) -> np.ndarray:
    return np.diag(np.arange(levels)).astype(complex)


def ket(dim: int, index: int) -> np.ndarray:
    vector = np.zeros((dim, 1), dtype=complex)
    vector[index, 0] = 1.0
    return vector


def projector(dim: int, index: int) -> np.ndarray:
    state = ket(dim, index)
    return state @ state.conj().T


def dagger(matrix: np.ndarray) -> np.ndarray:
    return matrix.conj().T


def is_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.max(np.abs(matrix - dagger(matrix)), initial=0.0) <= tol)


def is_density_matrix(rho: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    if not is_hermitian(rho, tol):
        return False
    if abs(np.trace(rho) - 1.0) > tol:
        return False
    return bool(np.min(np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))) >= -tol)


def check_density_matrix(rho: np.ndarray, what: str = "state") -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ModelError(f"{what} must be a square matrix, got shape {rho.shape}")
    if not is_density_matrix(rho):
        raise ModelError(
            f"{what} is not a density matrix (trace {np.trace(rho).real:.3g})"
        )
    return rho


def operator_function(
    matrix: np.ndarray, func: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Apply ``func`` to the eigenvalues of a Hermitian matrix.

    ``func`` receives the real eigenvalue array and may return real or complex
    values. Combinations with a removable singularity at zero (such as
    ``sin(c*sqrt(x))/sqrt(x)``) are the caller's business; see
    :func:`sin_sqrt_ratio`.
    """
    matrix = np.asarray(matrix, dtype=complex)
    if not is_hermitian(matrix):
        raise ModelError("operator_function needs a Hermitian matrix")
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (matrix + dagger(matrix)))
    values = np.asarray(func(eigenvalues), dtype=complex)
    return (eigenvectors * values) @ dagger(eigenvectors)


def sin_sqrt_ratio(scale: float) -> Callable[[np.ndarray], np.ndarray]:
    """x -> sin(scale*sqrt(x))/sqrt(x), continued to ``scale`` at x = 0."""

    def func(x: np.ndarray) -> np.ndarray:
        root = np.sqrt(np.clip(x, 0.0, None))
        out = np.full_like(root, float(scale))
        nonzero = root > 1e-12
        out[nonzero] = np.sin(scale * root[nonzero]) / root[nonzero]
        return out

    return func


def random_density_matrix(
    dim: int, rng: Optional[np.random.Generator] = None, rank: Optional[int] = None
) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng()
    rank = rank or dim
    ginibre = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = ginibre @ dagger(ginibre)
    return rho / np.trace(rho)


def hermitize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + dagger(matrix))
