# Global imports
import numpy as np
import pytest
from scipy.integrate import quad

from conftest import poisson_clock
from jumpfisher.errors import InfiniteInformationError, ModelModeError
from jumpfisher.model.builtin_models import (
    fluorescence_closed_forms,
    qubit_thermometer,
    resonant_fluorescence,
    thermometry_closed_form,
)
from jumpfisher.renewal.renewal_fisher import (
    fisher_bound,
    fisher_channels,
    fisher_classical_me,
    fisher_renewal,
    information_density,
    pauli_rate_matrix,
    renewal_sweep,
    sample_mean_fisher,
)
from jumpfisher.renewal.renewal_structure import (
    NotRenewal,
    channel_chain,
    check_renewal,
)


def test_information_density_guard():
    np.testing.assert_allclose(
        information_density([0.0, 2.0], [0.0, 1.0]), [0.0, 0.5]
    )
    with pytest.raises(InfiniteInformationError):
        information_density([0.0], [1.0])


def test_isolated_zeros_ignore_finite_difference_noise():
    value = [0.0, 1e-16, 1e-15, 0.5]
    derivative = [3e-9, -2e-8, 1e-9, 0.5]
    np.testing.assert_allclose(
        information_density(value, derivative, isolated_zeros=True),
        [0.0, 0.0, 0.0, 0.5],
    )
    with pytest.raises(InfiniteInformationError):
        information_density(value, derivative)


def test_fisher_horizon_covers_the_weighted_tail():
    structure = check_renewal(poisson_clock(2.0))
    plain = structure.tail_time(tol=1e-9)
    weighted = structure.tail_time(tol=1e-9, moment=2)
    assert weighted > plain
    assert (2.0 * weighted) ** 2 * np.exp(-2.0 * weighted) < 1e-9


def test_thermometry_quadrature_is_not_truncated(thermometer):
    report = fisher_renewal(thermometer, "nbar")
    expected = thermometry_closed_form(1.5, 1.0, 1.0, 1.0)
    assert report.fisher == pytest.approx(expected, rel=5e-9)
    assert fisher_bound(thermometer, "nbar") <= report.fisher * (1.0 + 1e-9)


def test_coupled_qubits_are_not_renewal(coupled):
    verdict = check_renewal(coupled)
    assert isinstance(verdict, NotRenewal)
    assert not verdict
    assert "rank" in str(verdict)
    with pytest.raises(ModelModeError):
        fisher_renewal(coupled, "gamma")


def test_waiting_time_distributions_are_normalized(thermometer):
    structure = check_renewal(thermometer)
    for q in structure.labels:
        total = sum(
            quad(lambda t, k=k: structure.wtd(t, k, q), 0.0, 60.0, limit=400)[0]
            for k in structure.labels
        )
        assert total == pytest.approx(1.0, abs=1e-8)


def test_channel_chain_matches_activities(thermometer):
    chain = channel_chain(check_renewal(thermometer))
    np.testing.assert_allclose(chain.stationary, chain.perron, atol=1e-8)
    np.testing.assert_allclose(chain.transition.sum(axis=0), 1.0, atol=1e-10)


def test_poisson_clock_information():
    for rate in (0.5, 2.0):
        report = fisher_renewal(poisson_clock(rate), "gamma")
        assert report.fisher == pytest.approx(1.0 / rate**2, rel=1e-7)
        assert report.fisher_channels == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("Omega,Gamma", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)])
def test_fluorescence_closed_form(Omega, Gamma):
    report = fisher_renewal(resonant_fluorescence(Omega, Gamma), "Omega")
    expected = fluorescence_closed_forms(Omega, Gamma)["fisher_per_jump"]
    assert report.fisher == pytest.approx(expected, rel=1e-6)
    assert abs(report.decomposition_residual) < 1e-8


def test_fluorescence_reference_value(fluorescence):
    report = fisher_renewal(fluorescence, "Omega")
    assert report.fisher == pytest.approx(12.0, rel=1e-6)


@pytest.mark.parametrize("omega", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("Omega", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("nbar", [0.5, 1.5])
def test_thermometry_closed_form(nbar, Omega, omega):
    model = qubit_thermometer(nbar=nbar, omega=omega, Omega=Omega, gamma=1.0)
    report = fisher_renewal(model, "nbar")
    expected = thermometry_closed_form(nbar, omega, Omega, 1.0)
    assert report.fisher == pytest.approx(expected, rel=1e-6)


def test_thermometry_reference_value(thermometer):
    assert fisher_renewal(thermometer, "nbar").fisher == pytest.approx(
        0.2988, abs=5e-5
    )


def test_weak_drive_limit():
    nbar = 1.5
    limit = 0.5 * (1.0 / nbar**2 + 1.0 / (nbar + 1.0) ** 2)
    report = fisher_renewal(qubit_thermometer(nbar=nbar, Omega=1e-3), "nbar")
    assert report.fisher == pytest.approx(limit, abs=1e-4)


def test_undriven_thermometer_maps_to_pauli_chain():
    nbar, step = 1.5, 1e-5
    model = qubit_thermometer(nbar=nbar, Omega=0.0)
    rates = pauli_rate_matrix(check_renewal(model))
    slope = (
        pauli_rate_matrix(check_renewal(model.with_params(nbar=nbar + step)))
        - pauli_rate_matrix(check_renewal(model.with_params(nbar=nbar - step)))
    ) / (2.0 * step)
    classical = fisher_classical_me(rates, slope)
    quantum = fisher_renewal(model, "nbar")
    assert classical.fisher == pytest.approx(quantum.fisher, rel=1e-7)
    # channels alternate deterministically without drive
    assert quantum.fisher_channels == pytest.approx(0.0, abs=1e-10)


def test_driven_thermometer_is_not_a_pauli_chain(thermometer):
    with pytest.raises(ModelModeError):
        pauli_rate_matrix(check_renewal(thermometer))


def test_channel_information_orders(thermometer):
    report = fisher_renewal(thermometer, "nbar")
    assert 0.0 < report.fisher_channels < report.fisher
    assert fisher_channels(thermometer, "nbar") == pytest.approx(
        report.fisher_channels, rel=1e-10
    )
    assert report.fisher == pytest.approx(
        report.fisher_channels + report.fisher_times, abs=1e-8
    )


def test_bound_is_saturated_by_exponential_waiting_times():
    clock = poisson_clock(1.3)
    assert fisher_bound(clock, "gamma") == pytest.approx(
        fisher_renewal(clock, "gamma").fisher, rel=1e-7
    )


@pytest.mark.parametrize("param", ["nbar", "Omega", "gamma"])
def test_bound_never_exceeds_the_information(thermometer, param):
    bound = fisher_bound(thermometer, param)
    assert bound <= fisher_renewal(thermometer, param).fisher + 1e-8


def test_sample_mean_information_of_fluorescence(fluorescence):
    report = sample_mean_fisher(fluorescence, "Omega")
    expected = fluorescence_closed_forms(1.0, 1.0)["sample_mean_per_jump"]
    assert report.fisher_per_jump == pytest.approx(4.0 / 3.0, rel=1e-6)
    assert report.fisher_per_jump == pytest.approx(expected, rel=1e-6)
    assert report.lags == 0


@pytest.mark.parametrize("Gamma", [0.5, 1.0, 2.0])
def test_sample_mean_below_full_information(Gamma):
    model = resonant_fluorescence(Omega=1.0, Gamma=Gamma)
    assert (
        sample_mean_fisher(model, "Omega").fisher_per_jump
        <= fisher_renewal(model, "Omega").fisher
    )


def test_sample_mean_of_two_channel_model(thermometer):
    report = sample_mean_fisher(thermometer, "nbar", jumps=100)
    assert report.lags >= 10
    assert report.total(100) == pytest.approx(100 * report.fisher_per_jump)
    assert report.fisher_per_jump <= fisher_renewal(thermometer, "nbar").fisher


def test_renewal_sweep_over_drive(thermometer):
    results = renewal_sweep(thermometer, "nbar", "Omega", [0.5, 1.0])
    assert [value for value, _ in results] == [0.5, 1.0]
    for _, report in results:
        assert 0.0 <= report.channel_fraction <= 1.0
