# Global imports
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.linalg import null_space

from jumpfisher.errors import (
    AmbiguousSteadyStateError,
    ConvergenceError,
    InfiniteInformationError,
    ModelModeError,
    QuadratureError,
)
from jumpfisher.model.lindblad_model import (
    DisplacedTriple,
    LindbladModel,
    ParamKey,
    Unraveling,
    displace,
)
from jumpfisher.quantum.superoperators import inverse, steady_state, trace_row
from jumpfisher.renewal.renewal_structure import (
    ChannelChain,
    NotRenewal,
    RenewalStructure,
    channel_chain,
    check_renewal,
    transition_matrix,
)

log = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-14
DERIVATIVE_FLOOR = 1e-10
QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-14
MAX_PANELS = 400
FISHER_TAIL_TOL = 1e-13
COVARIANCE_WINDOW = 10
COVARIANCE_REL_TOL = 1e-3
MAX_LAG = 100000

BOUNDARY_CAVEAT = (
    "Per-jump values exclude the first waiting time after preparation; the "
    "omitted boundary term is O(1) in the number of jumps."
)


def information_density(
    value: np.ndarray, derivative: np.ndarray, isolated_zeros: bool = False
) -> np.ndarray:
    """(d value)^2 / value with the zero-density guard.

    Points where the density vanishes contribute nothing as long as the
    derivative vanishes with it; otherwise the information is infinite.

    With ``isolated_zeros`` the values sample a density that is smooth and
    non-negative in both time and parameter, so (dW)^2 <= 2 max|d2W| W holds
    and a vanishing density bounds its own derivative. Sub-floor points then
    contribute nothing whatever the finite-difference derivative reads.
    """
    value = np.asarray(value, dtype=float)
    derivative = np.asarray(derivative, dtype=float)
    small = value < DENSITY_FLOOR
    if not isolated_zeros and np.any(
        small & (np.abs(derivative) >= DERIVATIVE_FLOOR)
    ):
        raise InfiniteInformationError(
            "Derivative of a probability density is non-zero where the density "
            "vanishes: the Fisher information is infinite"
        )
    safe = np.where(small, 1.0, value)
    return np.where(small, 0.0, derivative**2 / safe)


@dataclass
class PairDiagnostics:
    channel: str
    previous: str
    probability: float
    fisher: float
    fisher_times: float
    error: float


@dataclass
class RenewalFisherReport:
    param: str
    value: float
    fisher: float
    fisher_channels: float
    fisher_times: float
    quadrature_error: float
    decomposition_residual: float
    t_max: float
    panels: int
    stationary: np.ndarray
    pairs: List[PairDiagnostics] = field(default_factory=list)
    caveat: str = BOUNDARY_CAVEAT

    @property
    def channel_fraction(self) -> float:
        return self.fisher_channels / self.fisher if self.fisher > 0 else 0.0

    def total(self, jumps: int) -> float:
        return jumps * self.fisher


def _as_structure(
    structure: Union[RenewalStructure, LindbladModel]
) -> RenewalStructure:
    if isinstance(structure, RenewalStructure):
        return structure
    verdict = check_renewal(structure)
    if not verdict:
        raise ModelModeError(str(verdict))
    return verdict


def displaced_structures(
    structure: RenewalStructure,
    param: Optional[ParamKey] = None,
    dtheta: Optional[float] = None,
) -> Tuple[RenewalStructure, RenewalStructure, DisplacedTriple]:
    triple = displace(structure.model, param, dtheta, theta=structure.theta)
    return (
        structure.with_unraveling(triple.plus),
        structure.with_unraveling(triple.minus),
        triple,
    )


def panel_breaks(structure: RenewalStructure, t_max: float) -> np.ndarray:
    """Panel edges spanning about two oscillation periods each."""
    frequency = structure.oscillation_frequency
    width = t_max / 8.0
    if frequency > 1e-12:
        width = min(width, 2.0 * 2.0 * np.pi / frequency)
    width = max(width, t_max / MAX_PANELS)
    count = int(np.ceil(t_max / width))
    return np.linspace(0.0, t_max, count + 1)


def _integrate(function: Callable[[float], float], breaks: np.ndarray):
    total, error = 0.0, 0.0
    for low, high in zip(breaks[:-1], breaks[1:]):
        value, panel_error, *rest = quad(
            function,
            low,
            high,
            epsabs=QUAD_EPSABS,
            epsrel=QUAD_EPSREL,
            limit=200,
            full_output=1,
        )
        if len(rest) > 1:
            log.debug(f"quad on [{low:.3g}, {high:.3g}]: {rest[1]}")
            if panel_error > 1e-6 * max(abs(value), 1.0):
                raise QuadratureError(
                    f"Quadrature did not converge on [{low:.3g}, {high:.3g}] "
                    f"(error estimate {panel_error:.3g})"
                )
        total += value
        error += panel_error
    return total, error


def fisher_renewal(
    structure: Union[RenewalStructure, LindbladModel],
    param: Optional[ParamKey] = None,
    dtheta: Optional[float] = None,
) -> RenewalFisherReport:
    """Per-jump Fisher information of a renewal record and its decomposition.

    F/N = sum_q p_q sum_k int (d W(t,k|q))^2 / W(t,k|q) dt, split into the
    information of the channel sequence and of the times given the channels.
    """
    structure = _as_structure(structure)
    plus, minus, triple = displaced_structures(structure, param, dtheta)
    step = 2.0 * triple.dtheta
    chain = channel_chain(structure)
    d_transition = (transition_matrix(plus) - transition_matrix(minus)) / step

    # the integrand decays like tau^2 S(tau), not like the survival S
    t_max = max(
        candidate.tail_time(tol=FISHER_TAIL_TOL, moment=2)
        for candidate in (structure, plus, minus)
    )
    breaks = panel_breaks(structure, t_max)
    log.debug(f"Renewal quadrature on [0, {t_max:.4g}] with {len(breaks) - 1} panels")

    fisher = fisher_times = error = 0.0
    pairs = []
    labels = structure.labels
    for q, p_q in enumerate(chain.stationary):
        if p_q <= 0.0 or not structure.active[q]:
            continue
        for k, label in enumerate(labels):
            probability = chain.transition[k, q]
            d_probability = d_transition[k, q]

            def full(tau: float, k=k, q=q) -> float:
                value = structure.wtd(tau, k, q)
                slope = (plus.wtd(tau, k, q) - minus.wtd(tau, k, q)) / step
                return float(information_density(value, slope, isolated_zeros=True))

            def conditional(tau: float, k=k, q=q, p=probability, dp=d_probability):
                value = structure.wtd(tau, k, q)
                slope = (plus.wtd(tau, k, q) - minus.wtd(tau, k, q)) / step
                density = value / p
                d_density = slope / p - value * dp / p**2
                return float(
                    information_density(density, d_density, isolated_zeros=True)
                )

            pair_fisher, pair_error = _integrate(full, breaks)
            pair_times, times_error = 0.0, 0.0
            if probability > DENSITY_FLOOR:
                pair_times, times_error = _integrate(conditional, breaks)
            elif abs(d_probability) >= DERIVATIVE_FLOOR:
                raise InfiniteInformationError(
                    f"Transition {labels[q]} -> {label} has zero probability but a "
                    f"non-zero derivative"
                )
            fisher += p_q * pair_fisher
            fisher_times += p_q * probability * pair_times
            error += p_q * (pair_error + probability * times_error)
            pairs.append(
                PairDiagnostics(
                    channel=label,
                    previous=labels[q],
                    probability=float(probability),
                    fisher=pair_fisher,
                    fisher_times=pair_times,
                    error=pair_error,
                )
            )

    fisher_channels = _channel_information(chain, chain.transition, d_transition)
    residual = fisher - fisher_channels - fisher_times
    report = RenewalFisherReport(
        param=triple.param,
        value=float(structure.model.value(triple.param)),
        fisher=fisher,
        fisher_channels=fisher_channels,
        fisher_times=fisher_times,
        quadrature_error=error,
        decomposition_residual=residual,
        t_max=t_max,
        panels=len(breaks) - 1,
        stationary=chain.stationary,
        pairs=pairs,
    )
    log.info(
        f"{structure.model.name}: F/N={fisher:.8g} (channels {fisher_channels:.6g}, "
        f"times {fisher_times:.6g}) about {triple.param}"
    )
    return report


def _channel_information(
    chain: ChannelChain, transition: np.ndarray, d_transition: np.ndarray
) -> float:
    total = 0.0
    for q, p_q in enumerate(chain.stationary):
        if p_q <= 0.0:
            continue
        density = information_density(transition[:, q], d_transition[:, q])
        total += p_q * float(np.sum(density))
    return total


def fisher_channels(
    structure: Union[RenewalStructure, LindbladModel],
    param: Optional[ParamKey] = None,
    dtheta: Optional[float] = None,
) -> float:
    """Per-jump information of the channel sequence alone (no time tags)."""
    structure = _as_structure(structure)
    plus, minus, triple = displaced_structures(structure, param, dtheta)
    chain = channel_chain(structure)
    d_transition = (transition_matrix(plus) - transition_matrix(minus)) / (
        2.0 * triple.dtheta
    )
    return _channel_information(chain, chain.transition, d_transition)


@dataclass
class ClassicalFisher:
    fisher: float
    fisher_channels: float
    fisher_times: float
    stationary: np.ndarray
    activity: float


def fisher_classical_me(rates: np.ndarray, derivative: np.ndarray) -> ClassicalFisher:
    """Per-jump Fisher information of a classical jump process.

    ``rates[j, i]`` is the rate of i -> j, ``derivative`` its parameter
    derivative.
    """
    rates = np.asarray(rates, dtype=float)
    derivative = np.asarray(derivative, dtype=float)
    if np.any(rates < 0) or np.any(np.diag(rates) != 0):
        raise ValueError("Rates must be non-negative with a zero diagonal")
    escape = rates.sum(axis=0)
    d_escape = derivative.sum(axis=0)
    generator = rates - np.diag(escape)
    kernel = null_space(generator)
    if kernel.shape[1] != 1:
        raise AmbiguousSteadyStateError(
            f"Rate matrix is not ergodic ({kernel.shape[1]} stationary states)"
        )
    stationary = np.real(kernel[:, 0])
    stationary = stationary / stationary.sum()
    activity = float(escape @ stationary)

    fisher = float(
        np.sum(stationary[None, :] * information_density(rates, derivative)) / activity
    )
    fisher_times = float(
        np.sum(stationary * information_density(escape, d_escape)) / activity
    )
    return ClassicalFisher(
        fisher=fisher,
        fisher_channels=fisher - fisher_times,
        fisher_times=fisher_times,
        stationary=stationary,
        activity=activity,
    )


def pauli_rate_matrix(
    structure: RenewalStructure, rel_tol: float = 1e-4, probes: int = 5
) -> np.ndarray:
    """Classical rates between post-jump states for single-exponential WTDs.

    Returns R with R[k, q] = p(k|q) / <tau>_q, the rate of the jump q -> k.
    """
    transition = transition_matrix(structure)
    mean_wait = -np.real(
        trace_row(structure.dim) @ structure.nojump_inverse @ structure.reset_vectors.T
    )
    rates = np.zeros_like(transition)
    for q in np.flatnonzero(structure.active):
        escape = 1.0 / mean_wait[q]
        times = np.linspace(0.0, 3.0 * mean_wait[q], probes)
        observed = structure.wtd_columns(times, q)
        expected = np.outer(escape * np.exp(-escape * times), transition[:, q])
        scale = escape * max(transition[:, q].max(), DENSITY_FLOOR)
        if np.max(np.abs(observed - expected)) > rel_tol * scale:
            raise ModelModeError(
                f"Waiting times after '{structure.labels[q]}' are not a single "
                f"exponential"
            )
        rates[:, q] = transition[:, q] * escape
    np.fill_diagonal(rates, 0.0)
    if np.any(np.diag(transition)[structure.active] > DENSITY_FLOOR):
        raise ModelModeError("Self-transitions do not map to a Pauli master equation")
    return rates


def fisher_bound(
    structure: Union[RenewalStructure, LindbladModel],
    param: Optional[ParamKey] = None,
    dtheta: Optional[float] = None,
) -> float:
    """Lower bound on F/N from the conditional mean waiting times."""
    structure = _as_structure(structure)
    plus, minus, triple = displaced_structures(structure, param, dtheta)
    step = 2.0 * triple.dtheta
    chain = channel_chain(structure)
    d_transition = (transition_matrix(plus) - transition_matrix(minus)) / step
    bound = _channel_information(chain, chain.transition, d_transition)

    moments = [pair_moments(s) for s in (structure, plus, minus)]
    (mean, second), (mean_p, _), (mean_m, _) = moments
    d_mean = (mean_p - mean_m) / step
    for q, p_q in enumerate(chain.stationary):
        if p_q <= 0.0:
            continue
        for k in range(len(structure.labels)):
            probability = chain.transition[k, q]
            if probability <= DENSITY_FLOOR:
                continue
            variance = second[k, q] - mean[k, q] ** 2
            if variance <= DENSITY_FLOOR * max(mean[k, q] ** 2, 1.0):
                if abs(d_mean[k, q]) < DERIVATIVE_FLOOR:
                    continue
                raise InfiniteInformationError(
                    f"Zero waiting-time variance for {structure.labels[q]} -> "
                    f"{structure.labels[k]}"
                )
            bound += p_q * probability * d_mean[k, q] ** 2 / variance
    return bound


def pair_moments(structure: RenewalStructure) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional first and second moments of W(t|k,q) = W(t,k|q) / p(k|q)."""
    inv = structure.nojump_inverse
    rows = structure.unraveling.jump_rows
    columns = structure.reset_vectors.T
    probability = transition_matrix(structure)
    first = np.real(rows @ inv @ inv @ columns)
    second = -2.0 * np.real(rows @ inv @ inv @ inv @ columns)
    safe = np.where(probability > DENSITY_FLOOR, probability, 1.0)
    return first / safe, second / safe


# ---------------- SAMPLE MEAN ----------------


@dataclass
class SampleMeanReport:
    param: str
    mean: float
    d_mean: float
    variance: float
    covariance_sum: float
    lags: int
    fisher_per_jump: float

    def total(self, jumps: int) -> float:
        return jumps * self.fisher_per_jump


def waiting_time_moments(unraveling: Unraveling, rho_ss: Optional[np.ndarray] = None):
    """Mean, second moment and post-jump state of the label-free waiting times."""
    if rho_ss is None:
        rho_ss = steady_state(unraveling.liouvillian)
    jump = unraveling.total_jump.matrix
    inv = inverse(unraveling.nojump)
    post = jump @ rho_ss.flatten(order="F")
    post = post / np.real(trace_row(unraveling.dim) @ post)
    row = trace_row(unraveling.dim) @ jump
    mean = float(np.real(row @ inv @ inv @ post))
    second = float(np.real(-2.0 * row @ inv @ inv @ inv @ post))
    return mean, second, post, inv, row


def covariance_series(
    unraveling: Unraveling,
    rho_ss: Optional[np.ndarray] = None,
    max_lag: int = MAX_LAG,
) -> Tuple[np.ndarray, float]:
    """Stationary covariances C_i of waiting times i jumps apart.

    Stops after COVARIANCE_WINDOW consecutive lags with |C_i| below
    COVARIANCE_REL_TOL times the variance.
    """
    mean, second, post, inv, row = waiting_time_moments(unraveling, rho_ss)
    variance = second - mean**2
    transfer = -unraveling.total_jump.matrix @ inv
    left = row @ inv @ inv
    right = unraveling.total_jump.matrix @ inv @ inv @ post
    values = []
    quiet = 0
    for _ in range(max_lag):
        value = float(np.real(left @ right)) - mean**2
        values.append(value)
        quiet = quiet + 1 if abs(value) < COVARIANCE_REL_TOL * variance else 0
        if quiet >= COVARIANCE_WINDOW:
            return np.array(values), variance
        right = transfer @ right
    raise ConvergenceError(
        f"Waiting-time covariances still above {COVARIANCE_REL_TOL} of the "
        f"variance after {max_lag} lags"
    )


def empirical_covariances(
    waiting_times: Sequence[np.ndarray], variance: float, max_lag: int = 1000
) -> np.ndarray:
    """Lag covariances estimated from recorded waiting-time sequences."""
    pooled = np.concatenate([np.asarray(taus, dtype=float) for taus in waiting_times])
    mean = pooled.mean()
    values = []
    quiet = 0
    for lag in range(1, max_lag + 1):
        products = [
            (taus[:-lag] - mean) * (taus[lag:] - mean)
            for taus in map(np.asarray, waiting_times)
            if len(taus) > lag
        ]
        if not products:
            break
        value = float(np.mean(np.concatenate(products)))
        values.append(value)
        quiet = quiet + 1 if abs(value) < COVARIANCE_REL_TOL * variance else 0
        if quiet >= COVARIANCE_WINDOW:
            return np.array(values)
    raise ConvergenceError(
        f"Empirical waiting-time covariances did not settle within {max_lag} lags"
    )


def sample_mean_fisher(
    model: Union[RenewalStructure, LindbladModel],
    param: Optional[ParamKey] = None,
    jumps: int = 1,
    dtheta: Optional[float] = None,
    waiting_times: Optional[Sequence[np.ndarray]] = None,
    transform: Optional[Callable[[Unraveling], Unraveling]] = None,
) -> SampleMeanReport:
    """Fisher information of the mean waiting time over ``jumps`` jumps.

    F_T = N (d mu)^2 / (sigma^2 + 2 sum_i C_i). Single-channel renewal models
    have C_i = 0. Other models use the exact stationary covariance series, or
    estimates from ``waiting_times`` (one array per record) when given.
    """
    structure = model if isinstance(model, RenewalStructure) else None
    model = structure.model if structure is not None else model
    theta = structure.theta if structure is not None else None
    triple = displace(model, param, dtheta, theta=theta, transform=transform)

    center = triple.center.merged()
    mean, second, *_ = waiting_time_moments(center)
    mean_p, *_ = waiting_time_moments(triple.plus.merged())
    mean_m, *_ = waiting_time_moments(triple.minus.merged())
    d_mean = (mean_p - mean_m) / (2.0 * triple.dtheta)
    variance = second - mean**2

    renewal = check_renewal(model, theta) if structure is None else structure
    single_channel = (
        not isinstance(renewal, NotRenewal) and int(np.sum(renewal.active)) == 1
    )
    if single_channel:
        covariances = np.zeros(0)
    elif waiting_times is not None:
        covariances = empirical_covariances(waiting_times, variance)
    else:
        covariances, _ = covariance_series(center)

    effective = variance + 2.0 * float(np.sum(covariances))
    fisher = d_mean**2 / effective
    log.info(
        f"Sample-mean information about {triple.param}: {fisher:.8g} per jump "
        f"({len(covariances)} covariance lags)"
    )
    return SampleMeanReport(
        param=triple.param,
        mean=mean,
        d_mean=d_mean,
        variance=variance,
        covariance_sum=float(np.sum(covariances)),
        lags=len(covariances),
        fisher_per_jump=fisher,
    )


# ---------------- SWEEPS ----------------


def renewal_sweep(
    model: LindbladModel,
    param: Optional[ParamKey],
    sweep_name: str,
    values: Sequence[float],
    dtheta: Optional[float] = None,
) -> List[Tuple[float, RenewalFisherReport]]:
    results = []
    for value in values:
        point = model.with_params({sweep_name: value})
        results.append((float(value), fisher_renewal(point, param, dtheta)))
    return results
