# Global imports
import numpy as np
import pytest

from jumpfisher.model.builtin_models import (
    coupled_qubits,
    qubit_thermometer,
    resonant_fluorescence,
)
from jumpfisher.model.lindblad_model import JumpChannel, LindbladModel
from jumpfisher.quantum.operators import projector, sigma_minus
from jumpfisher.trajectory.records import Jump, MeasurementRecord


def poisson_clock(rate: float = 2.0) -> LindbladModel:
    """One-level system clicking at a constant rate: W(tau) = rate exp(-rate tau)."""
    one = np.ones((1, 1), dtype=complex)
    return LindbladModel(
        name="poisson-clock",
        dim=1,
        param_names=("gamma",),
        theta=(rate,),
        hamiltonian_at=lambda t: np.zeros((1, 1), dtype=complex),
        hamiltonian_derivative_at=lambda t, i: np.zeros((1, 1), dtype=complex),
        channels=(
            JumpChannel(
                label="click",
                operator_at=lambda t: np.sqrt(t[0]) * one,
                derivative_at=lambda t, i: 0.5 / np.sqrt(t[0]) * one,
            ),
        ),
        initial_state_at=lambda t: one.copy(),
        bounds={"gamma": (0.0, np.inf)},
    )


def pure_decay(rate: float = 1.0) -> LindbladModel:
    """Undriven qubit prepared in |e> that decays once."""
    return LindbladModel(
        name="pure-decay",
        dim=2,
        param_names=("gamma",),
        theta=(rate,),
        hamiltonian_at=lambda t: np.zeros((2, 2), dtype=complex),
        hamiltonian_derivative_at=lambda t, i: np.zeros((2, 2), dtype=complex),
        channels=(
            JumpChannel(
                label="emission",
                operator_at=lambda t: np.sqrt(t[0]) * sigma_minus(),
                derivative_at=lambda t, i: 0.5 / np.sqrt(t[0]) * sigma_minus(),
            ),
        ),
        initial_state_at=lambda t: projector(2, 0),
        bounds={"gamma": (0.0, np.inf)},
    )


def make_record(taus, channel="click", final_stretch=None, trajectory=0):
    return MeasurementRecord(
        trajectory=trajectory,
        jumps=[Jump(tau=tau, channel=channel) for tau in taus],
        final_stretch=final_stretch,
    )


@pytest.fixture
def clock():
    return poisson_clock(2.0)


@pytest.fixture
def thermometer():
    return qubit_thermometer(nbar=1.5, omega=1.0, Omega=1.0, gamma=1.0)


@pytest.fixture
def fluorescence():
    return resonant_fluorescence(Omega=1.0, Gamma=1.0)


@pytest.fixture
def coupled():
    return coupled_qubits(gamma=0.4, Omega_A=1.0, Omega_B=1.0, g=0.01)
