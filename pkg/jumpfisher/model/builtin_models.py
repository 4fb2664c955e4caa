# Global imports
import logging
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from jumpfisher.errors import JumpFisherError, ModelError
from jumpfisher.model.lindblad_model import JumpChannel, LindbladModel
from jumpfisher.quantum.operators import (
    check_density_matrix,
    dagger,
    destroy,
    number,
    operator_function,
    projector,
    sigma_minus,
    sigma_plus,
    sigma_x,
    sigma_z,
    sin_sqrt_ratio,
)

TRUNCATION_WARN_POPULATION = 1e-3
POSITIVE = (0.0, np.inf)

InitialState = Union[None, str, np.ndarray]


def _rate_channel(
    label: str,
    operator: np.ndarray,
    rate: Callable[[np.ndarray], float],
    rate_gradient: Callable[[np.ndarray], Sequence[float]],
) -> JumpChannel:
    """Channel sqrt(rate(theta)) * operator with its exact theta-derivative."""

    def operator_at(theta: np.ndarray) -> np.ndarray:
        return np.sqrt(max(rate(theta), 0.0)) * operator

    def derivative_at(theta: np.ndarray, index: int) -> np.ndarray:
        value = rate(theta)
        slope = rate_gradient(theta)[index]
        if slope == 0.0:
            return np.zeros_like(operator)
        if value <= 0.0:
            raise ModelError(f"Channel '{label}': derivative of sqrt(rate) at rate 0")
        return slope / (2.0 * np.sqrt(value)) * operator

    return JumpChannel(
        label=label, operator_at=operator_at, derivative_at=derivative_at
    )


def _linear_hamiltonian(terms: Dict[int, np.ndarray], dim: int):
    """H(theta) = sum_i theta_i * terms[i] and its derivative."""

    def hamiltonian_at(theta: np.ndarray) -> np.ndarray:
        hamiltonian = np.zeros((dim, dim), dtype=complex)
        for index, operator in terms.items():
            hamiltonian = hamiltonian + theta[index] * operator
        return hamiltonian

    def hamiltonian_derivative_at(theta: np.ndarray, index: int) -> np.ndarray:
        return terms.get(index, np.zeros((dim, dim), dtype=complex))

    return hamiltonian_at, hamiltonian_derivative_at


def _initial_state(initial_state: InitialState, default: np.ndarray):
    if initial_state is None:
        fixed = default
    elif isinstance(initial_state, str):
        if initial_state != "steady":
            raise ModelError(
                f"Initial state must be a matrix or 'steady', got '{initial_state}'"
            )
        return None
    else:
        fixed = check_density_matrix(np.asarray(initial_state, dtype=complex))
    return lambda theta: fixed


def _require_positive(model_name: str, **values: float):
    for name, value in values.items():
        if not value > 0:
            raise ModelError(f"{model_name}: {name} must be positive, got {value}")


def _require_non_negative(model_name: str, **values: float):
    for name, value in values.items():
        if value < 0:
            raise ModelError(f"{model_name}: {name} must be non-negative, got {value}")


# ---------------- QUBIT THERMOMETER ----------------


def qubit_thermometer(
    nbar: float = 1.5,
    omega: float = 1.0,
    Omega: float = 1.0,
    gamma: float = 1.0,
    initial_state: InitialState = None,
) -> LindbladModel:
    """Driven qubit exchanging excitations with a thermal bath of occupation nbar.

    H = (omega/2) sz + (Omega/2) sx, L+ = sqrt(gamma nbar) s+,
    L- = sqrt(gamma (nbar+1)) s-. Both channels are monitored.
    """
    _require_positive("qubit-thermometer", gamma=gamma)
    _require_non_negative("qubit-thermometer", nbar=nbar)
    hamiltonian_at, hamiltonian_derivative_at = _linear_hamiltonian(
        {1: 0.5 * sigma_z(), 2: 0.5 * sigma_x()}, dim=2
    )
    channels = (
        _rate_channel(
            "plus",
            sigma_plus(),
            rate=lambda t: t[3] * t[0],
            rate_gradient=lambda t: (t[3], 0.0, 0.0, t[0]),
        ),
        _rate_channel(
            "minus",
            sigma_minus(),
            rate=lambda t: t[3] * (t[0] + 1.0),
            rate_gradient=lambda t: (t[3], 0.0, 0.0, t[0] + 1.0),
        ),
    )
    return LindbladModel(
        name="qubit-thermometer",
        dim=2,
        param_names=("nbar", "omega", "Omega", "gamma"),
        theta=(nbar, omega, Omega, gamma),
        hamiltonian_at=hamiltonian_at,
        hamiltonian_derivative_at=hamiltonian_derivative_at,
        channels=channels,
        initial_state_at=_initial_state(initial_state, projector(2, 1)),
        bounds={"nbar": (0.0, np.inf), "gamma": POSITIVE},
        description="Driven qubit in a thermal bath, emissions and absorptions seen",
    )


# ---------------- RESONANT FLUORESCENCE ----------------


def resonant_fluorescence(
    Omega: float = 1.0, Gamma: float = 1.0, initial_state: InitialState = None
) -> LindbladModel:
    """Resonantly driven two-level atom, H = (Omega/2) sx, L = sqrt(Gamma) s-."""
    _require_positive("resonant-fluorescence", Omega=Omega, Gamma=Gamma)
    hamiltonian_at, hamiltonian_derivative_at = _linear_hamiltonian(
        {0: 0.5 * sigma_x()}, dim=2
    )
    channels = (
        _rate_channel(
            "emission",
            sigma_minus(),
            rate=lambda t: t[1],
            rate_gradient=lambda t: (0.0, 1.0),
        ),
    )
    return LindbladModel(
        name="resonant-fluorescence",
        dim=2,
        param_names=("Omega", "Gamma"),
        theta=(Omega, Gamma),
        hamiltonian_at=hamiltonian_at,
        hamiltonian_derivative_at=hamiltonian_derivative_at,
        channels=channels,
        initial_state_at=_initial_state(initial_state, projector(2, 1)),
        bounds={"Omega": POSITIVE, "Gamma": POSITIVE},
        description="Resonance fluorescence, only emissions are observed",
    )


# ---------------- COUPLED QUBITS ----------------


def coupled_qubits(
    gamma: float = 0.4,
    Omega_A: float = 1.0,
    Omega_B: float = 1.0,
    omega_A: float = 0.0,
    omega_B: float = 0.0,
    g: float = 0.01,
    n_th: float = 1.0,
    thermal_absorption: bool = False,
    initial_state: InitialState = None,
) -> LindbladModel:
    """Two driven qubits with an exchange coupling; only qubit B emits.

    H = Omega_A sx^A + Omega_B sx^B + omega_A sz^A + omega_B sz^B
        + g (s+^A s-^B + s-^A s+^B), L = sqrt(gamma) s-^B.
    With ``thermal_absorption`` qubit B also absorbs thermal photons:
    L_abs = sqrt(gamma n_th) s+^B and the emission rate becomes gamma (n_th + 1).
    The tensor ordering is A (x) B.
    """
    _require_positive("coupled-qubits", gamma=gamma)
    _require_non_negative("coupled-qubits", n_th=n_th)
    eye = np.eye(2, dtype=complex)
    exchange = np.kron(sigma_plus(), sigma_minus())
    hamiltonian_at, hamiltonian_derivative_at = _linear_hamiltonian(
        {
            1: np.kron(sigma_x(), eye),
            2: np.kron(eye, sigma_x()),
            3: np.kron(sigma_z(), eye),
            4: np.kron(eye, sigma_z()),
            5: exchange + dagger(exchange),
        },
        dim=4,
    )
    lower_b = np.kron(eye, sigma_minus())
    raise_b = np.kron(eye, sigma_plus())
    if thermal_absorption:
        channels = (
            _rate_channel(
                "emission",
                lower_b,
                rate=lambda t: t[0] * (t[6] + 1.0),
                rate_gradient=lambda t: (t[6] + 1.0, 0, 0, 0, 0, 0, t[0]),
            ),
            _rate_channel(
                "absorption",
                raise_b,
                rate=lambda t: t[0] * t[6],
                rate_gradient=lambda t: (t[6], 0, 0, 0, 0, 0, t[0]),
            ),
        )
    else:
        channels = (
            _rate_channel(
                "emission",
                lower_b,
                rate=lambda t: t[0],
                rate_gradient=lambda t: (1.0, 0, 0, 0, 0, 0, 0),
            ),
        )
    ground = np.kron(projector(2, 1), projector(2, 1))
    return LindbladModel(
        name="coupled-qubits",
        dim=4,
        param_names=("gamma", "Omega_A", "Omega_B", "omega_A", "omega_B", "g", "n_th"),
        theta=(gamma, Omega_A, Omega_B, omega_A, omega_B, g, n_th),
        hamiltonian_at=hamiltonian_at,
        hamiltonian_derivative_at=hamiltonian_derivative_at,
        channels=channels,
        initial_state_at=_initial_state(initial_state, ground),
        bounds={"gamma": POSITIVE, "n_th": (0.0, np.inf)},
        description="Exchange-coupled qubits, emissions of qubit B observed",
    )


# ---------------- MICROMASER ----------------


def micromaser_closed_form(
    g: float, tau: float, theta_atom: float, n_levels: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Field Kraus operators after one atom crosses the cavity.

    The atom enters in cos(theta)|e> + sin(theta)|g> and is measured in
    {|e>, |g>} on exit. With s = sqrt(a a^dagger) on the truncated space,

        L_e = cos(theta) cos(g tau s) - i sin(theta) [sin(g tau s)/s] a
        L_g = cos(theta) a^dagger [sin(g tau s)/s] + i sin(theta) cos(g tau sqrt(n))

    where sin(g tau s)/s is continued to g tau on the null space of s.
    """
    if n_levels < 2:
        raise ModelError(f"micromaser: n_levels must be at least 2, got {n_levels}")
    alpha, beta = np.cos(theta_atom), np.sin(theta_atom)
    a = destroy(n_levels)
    s_squared = a @ dagger(a)
    coupling = g * tau

    def cos_sqrt(x: np.ndarray) -> np.ndarray:
        return np.cos(coupling * np.sqrt(np.clip(x, 0.0, None)))

    cos_s = operator_function(s_squared, cos_sqrt)
    sinc_s = operator_function(s_squared, sin_sqrt_ratio(coupling))
    cos_n = operator_function(number(n_levels), cos_sqrt)
    excited = alpha * cos_s - 1j * beta * sinc_s @ a
    ground = alpha * dagger(a) @ sinc_s + 1j * beta * cos_n
    return excited, ground


def jaynes_cummings_kraus(
    g: float, tau: float, theta_atom: float, n_levels: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Same Kraus pair built from the truncated field (x) atom collision unitary."""
    a = destroy(n_levels)
    coupling_op = np.kron(a, sigma_plus()) + np.kron(dagger(a), sigma_minus())
    unitary = operator_function(coupling_op, lambda x: np.exp(-1j * g * tau * x))
    # indices: field out, atom out, field in, atom in
    blocks = unitary.reshape(n_levels, 2, n_levels, 2)
    atom_in = np.array([np.cos(theta_atom), np.sin(theta_atom)], dtype=complex)
    excited, ground = np.einsum("iajb,b->aij", blocks, atom_in)
    return excited, 1j * ground


def micromaser(
    g: float = 1.0,
    tau: float = 1.0,
    theta_atom: float = 0.0,
    gamma: float = 0.1,
    n_th: float = 0.1,
    atom_rate: float = 1.0,
    n_levels: int = 5,
    initial_state: InitialState = None,
) -> LindbladModel:
    """Cavity field probed by a beam of atoms, with a thermal leak.

    Atom detections a_e, a_g arrive at ``atom_rate`` with the field Kraus pair of
    :func:`micromaser_closed_form`; thermal photons enter (p_in) and leave
    (p_out) with L = sqrt(gamma n_th) a^dagger and sqrt(gamma (n_th+1)) a.
    The system Hamiltonian is zero.
    """
    n_levels = int(n_levels)
    _require_positive("micromaser", atom_rate=atom_rate)
    _require_non_negative("micromaser", gamma=gamma, n_th=n_th, tau=tau)
    if n_levels < 2:
        raise ModelError(f"micromaser: n_levels must be at least 2, got {n_levels}")
    a = destroy(n_levels)

    def atomic(index: int):
        def operator_at(theta: np.ndarray) -> np.ndarray:
            kraus = micromaser_closed_form(theta[0], theta[1], theta[2], n_levels)
            return np.sqrt(theta[5]) * kraus[index]

        return operator_at

    channels = (
        JumpChannel(label="a_e", operator_at=atomic(0)),
        JumpChannel(label="a_g", operator_at=atomic(1)),
        JumpChannel(
            label="p_in",
            operator_at=lambda t: np.sqrt(max(t[3] * t[4], 0.0)) * dagger(a),
        ),
        JumpChannel(
            label="p_out",
            operator_at=lambda t: np.sqrt(max(t[3] * (t[4] + 1.0), 0.0)) * a,
        ),
    )
    model = LindbladModel(
        name="micromaser",
        dim=n_levels,
        param_names=("g", "tau", "theta_atom", "gamma", "n_th", "atom_rate"),
        theta=(g, tau, theta_atom, gamma, n_th, atom_rate),
        hamiltonian_at=lambda t: np.zeros((n_levels, n_levels), dtype=complex),
        channels=channels,
        initial_state_at=_initial_state(initial_state, projector(n_levels, 0)),
        bounds={
            "tau": (0.0, np.inf),
            "gamma": (0.0, np.inf),
            "n_th": (0.0, np.inf),
            "atom_rate": POSITIVE,
        },
        description=f"Micromaser field on {n_levels} Fock levels",
    )
    _check_truncation(model)
    return model


def _check_truncation(model: LindbladModel):
    try:
        rho_ss = model.steady_state()
    except JumpFisherError as err:
        logging.debug(f"Truncation check skipped: {err}")
        return
    top = float(np.real(rho_ss[-1, -1]))
    if top > TRUNCATION_WARN_POPULATION:
        logging.warning(
            f"micromaser: steady-state population {top:.3g} on the highest kept "
            f"Fock level {model.dim - 1}; consider more levels"
        )


# ---------------- CLOSED FORMS ----------------


def fluorescence_closed_forms(Omega: float, Gamma: float) -> Dict[str, float]:
    """Per-jump Fisher information about Omega: full record and sample mean."""
    ratio = Omega / Gamma
    return {
        "fisher_per_jump": 8.0 / Gamma**2 + 4.0 / Omega**2,
        "sample_mean_per_jump": 4.0
        / (Omega**2 * (1.0 - 2.0 * ratio**2 + 4.0 * ratio**4)),
    }


def thermometry_closed_form(
    nbar: float, omega: float, Omega: float, gamma: float
) -> float:
    """Per-jump Fisher information about nbar of the thermometer record."""
    drive = (Omega / gamma) ** 2
    detuning = 1.0 + 4.0 * (omega / gamma / (2.0 * nbar + 1.0)) ** 2
    occupation = nbar * (nbar + 1.0)
    occupation_term = ((nbar + 1.0) ** 2 + nbar**2) / (
        occupation + 0.5 * drive / detuning
    )
    drive_term = drive / (occupation * detuning + 0.5 * drive)
    return (occupation_term + drive_term) / (2.0 * occupation)


def thermometry_rate_closed_form(nbar: float, gamma: float) -> float:
    """Fisher information about nbar per unit time of the undriven thermometer."""
    return (
        gamma
        * ((nbar + 1.0) ** 2 + nbar**2)
        / (nbar * (nbar + 1.0) * (2.0 * nbar + 1.0))
    )


# ---------------- REGISTRY ----------------


class BuiltinModel(Enum):
    QUBIT_THERMOMETER = "qubit-thermometer"
    RESONANT_FLUORESCENCE = "resonant-fluorescence"
    COUPLED_QUBITS = "coupled-qubits"
    MICROMASER = "micromaser"


builtin_handlers = {
    BuiltinModel.QUBIT_THERMOMETER: qubit_thermometer,
    BuiltinModel.RESONANT_FLUORESCENCE: resonant_fluorescence,
    BuiltinModel.COUPLED_QUBITS: coupled_qubits,
    BuiltinModel.MICROMASER: micromaser,
}

# Structural arguments that are not estimation parameters.
builtin_options = {
    BuiltinModel.QUBIT_THERMOMETER: (),
    BuiltinModel.RESONANT_FLUORESCENCE: (),
    BuiltinModel.COUPLED_QUBITS: ("thermal_absorption",),
    BuiltinModel.MICROMASER: ("n_levels",),
}


def build_builtin(
    name: str, params: Optional[Dict[str, object]] = None
) -> LindbladModel:
    try:
        kind = BuiltinModel(name)
    except ValueError as err:
        raise ModelError(
            f"Unknown model '{name}', expected one of "
            f"{[member.value for member in BuiltinModel]}"
        ) from err
    try:
        return builtin_handlers[kind](**(params or {}))
    except TypeError as err:
        raise ModelError(f"{name}: {err}") from err
