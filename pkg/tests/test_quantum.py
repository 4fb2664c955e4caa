# Global imports
import numpy as np
import pytest
from scipy.linalg import expm

from jumpfisher.errors import AmbiguousSteadyStateError, DarkSubspaceError, ModelError
from jumpfisher.quantum.operators import (
    destroy,
    operator_function,
    projector,
    random_density_matrix,
    sigma_minus,
    sigma_plus,
    sigma_x,
    sigma_z,
    sin_sqrt_ratio,
)
from jumpfisher.quantum.superoperators import (
    ModalPropagator,
    Superoperator,
    build_liouvillian,
    devectorize,
    jump_superoperator,
    slowest_decay_rate,
    spost,
    spre,
    steady_state,
    trace_row,
    vectorize,
)


def test_vectorization_convention():
    rng = np.random.default_rng(3)
    a, m, b = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    np.testing.assert_allclose(vectorize(a @ m @ b), np.kron(b.T, a) @ vectorize(m))
    np.testing.assert_allclose(spre(a) @ vectorize(m), vectorize(a @ m))
    np.testing.assert_allclose(spost(b) @ vectorize(m), vectorize(m @ b))
    np.testing.assert_allclose(devectorize(vectorize(m)), m)
    assert trace_row(3) @ vectorize(m) == pytest.approx(np.trace(m))


def test_jump_superoperator_sandwich():
    rho = random_density_matrix(2, np.random.default_rng(0))
    jump = jump_superoperator(sigma_minus(), efficiency=0.25)
    expected = 0.25 * sigma_minus() @ rho @ sigma_plus()
    np.testing.assert_allclose(jump.apply(rho), expected, atol=1e-14)


def test_liouvillian_is_trace_preserving():
    hamiltonian = 0.5 * sigma_x() + 0.3 * sigma_z()
    liouvillian = build_liouvillian(hamiltonian, [sigma_minus(), 0.5 * sigma_plus()])
    np.testing.assert_allclose(liouvillian.trace_row(), 0.0, atol=1e-14)


def test_thermal_steady_state():
    nbar = 1.5
    liouvillian = build_liouvillian(
        0.5 * sigma_z(),
        [np.sqrt(nbar) * sigma_plus(), np.sqrt(nbar + 1.0) * sigma_minus()],
    )
    rho = steady_state(liouvillian)
    # index 0 is the excited level
    assert rho[0, 0].real == pytest.approx(nbar / (2.0 * nbar + 1.0))
    assert np.trace(rho).real == pytest.approx(1.0)


def test_steady_state_not_unique():
    liouvillian = build_liouvillian(np.zeros((2, 2)), [])
    with pytest.raises(AmbiguousSteadyStateError):
        steady_state(liouvillian)


@pytest.mark.parametrize("times", [[0.0, 0.3, 2.5], [7.0]])
def test_modal_propagator_matches_expm(times):
    liouvillian = build_liouvillian(0.5 * sigma_x(), [sigma_minus()])
    propagator = ModalPropagator(liouvillian)
    assert propagator.is_modal
    for t, matrix in zip(times, propagator.matrices(times)):
        np.testing.assert_allclose(matrix, expm(liouvillian.matrix * t), atol=1e-12)


def test_modal_propagator_rejects_negative_time():
    with pytest.raises(ValueError):
        ModalPropagator(np.eye(4)).apply(np.ones(4), [-1.0])


def test_dark_generator_has_no_decay_rate():
    # |g> never emits again
    nojump = build_liouvillian(np.zeros((2, 2)), [sigma_minus()]) - jump_superoperator(
        sigma_minus()
    )
    with pytest.raises(DarkSubspaceError):
        slowest_decay_rate(nojump)


def test_superoperator_shape_is_checked():
    with pytest.raises(ModelError):
        Superoperator(dim=2, matrix=np.eye(3))


def test_operator_function_sinc_limit():
    a = destroy(4)
    ratio = operator_function(a @ a.conj().T, sin_sqrt_ratio(0.7))
    expected = np.diag(
        [np.sin(0.7 * np.sqrt(n)) / np.sqrt(n) for n in range(1, 4)] + [0.0]
    )
    # a a^dagger has eigenvalues 1..3 and 0 on the truncation edge
    expected[3, 3] = 0.7
    np.testing.assert_allclose(ratio, expected, atol=1e-12)
    np.testing.assert_allclose(projector(2, 0), np.diag([1.0, 0.0]))
