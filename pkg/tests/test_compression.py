# Global imports
import numpy as np
import pytest
from pydantic import ValidationError

from jumpfisher.compression.compression import (
    COMPRESSION_HEADER,
    CompressedFisher,
    CompressionMode,
    CompressionSpec,
    channels_only_fisher,
    compression_report,
    partial_monitoring,
    sample_mean_fisher_compressed,
    symbol_maps,
    times_only_fisher,
)
from jumpfisher.errors import ConfigError
from jumpfisher.model.builtin_models import coupled_qubits, qubit_thermometer
from jumpfisher.model.lindblad_model import assemble
from jumpfisher.monitoring.gillespie_fisher import gillespie_fisher
from jumpfisher.renewal.renewal_fisher import fisher_channels, fisher_renewal
from jumpfisher.trajectory.gillespie import StopRule


def test_compression_spec_validation(thermometer):
    spec = CompressionSpec(mode="times-only")
    assert spec.mode is CompressionMode.TIMES_ONLY
    with pytest.raises(ValidationError):
        CompressionSpec(mode="labels-only")
    with pytest.raises(ValidationError):
        CompressionSpec(mode="partial-monitoring", efficiencies={"plus": 1.5})
    with pytest.raises(ConfigError):
        CompressionSpec(mode="partial-monitoring", retained=["photon"]).check(
            thermometer
        )


def test_full_monitoring_is_left_unchanged(thermometer):
    partial = partial_monitoring(thermometer)
    assert partial.name == "qubit-thermometer-partial"
    assert partial.monitored_labels == thermometer.monitored_labels
    np.testing.assert_allclose(
        assemble(partial).nojump.matrix, assemble(thermometer).nojump.matrix
    )


def test_zero_efficiency_drops_the_channel(thermometer):
    by_efficiency = partial_monitoring(thermometer, efficiencies={"plus": 0.0})
    by_selection = partial_monitoring(thermometer, retained=["minus"])
    assert by_efficiency.monitored_labels == ("minus",)
    assert by_selection.monitored_labels == ("minus",)
    np.testing.assert_allclose(
        assemble(by_efficiency).nojump.matrix, assemble(by_selection).nojump.matrix
    )
    # the dynamics keep both channels
    np.testing.assert_allclose(
        assemble(by_selection).liouvillian.matrix,
        assemble(thermometer).liouvillian.matrix,
    )


def test_lower_efficiency_keeps_the_channel(thermometer):
    partial = partial_monitoring(thermometer, efficiencies={"minus": 0.5})
    assert partial.monitored_labels == ("plus", "minus")
    assert not assemble(partial).has_kraus


def test_nothing_observable(fluorescence, thermometer):
    with pytest.raises(ConfigError, match="nothing observable"):
        partial_monitoring(fluorescence, efficiencies={"emission": 0.0})
    with pytest.raises(ConfigError, match="nothing observable"):
        partial_monitoring(thermometer, retained=[])
    with pytest.raises(ConfigError):
        partial_monitoring(thermometer, retained=["emission"])


def test_symbol_maps_conserve_probability(thermometer):
    maps = symbol_maps(assemble(thermometer))
    total = sum(maps)
    rho = np.array([0.3, 0.1 - 0.2j, 0.1 + 0.2j, 0.7])
    row = np.array([1.0, 0.0, 0.0, 1.0])
    assert np.real(row @ total @ rho) == pytest.approx(1.0)


def test_single_channel_labels_carry_nothing(fluorescence):
    value, stderr = channels_only_fisher(fluorescence, "Omega")
    assert value == pytest.approx(0.0, abs=1e-12)
    assert stderr == 0.0


def test_undriven_labels_carry_nothing():
    model = qubit_thermometer(nbar=1.5, Omega=0.0)
    value, _ = channels_only_fisher(model, "nbar")
    assert value == pytest.approx(0.0, abs=1e-10)


def test_renewal_labels_use_the_channel_chain(thermometer):
    value, stderr = channels_only_fisher(thermometer, "nbar")
    assert value == pytest.approx(fisher_channels(thermometer, "nbar"), rel=1e-12)
    assert stderr == 0.0
    assert value < fisher_renewal(thermometer, "nbar").fisher


def test_labels_of_coupled_qubits_by_monte_carlo():
    model = coupled_qubits(thermal_absorption=True, n_th=0.5, g=0.3)
    value, stderr = channels_only_fisher(
        model, "n_th", jumps=20, trajectories=50, seed=3
    )
    assert value >= 0.0
    assert stderr >= 0.0


def test_times_of_a_single_channel_are_the_whole_record(fluorescence):
    stop = StopRule(jumps=10)
    times = times_only_fisher(
        fluorescence, stop, trajectories=50, seed=7, param="Omega"
    )
    full = gillespie_fisher(
        fluorescence, stop, trajectories=50, seed=7, param="Omega"
    )
    assert times.final == pytest.approx(full.final, rel=1e-5)


def test_sample_mean_of_fluorescence(fluorescence):
    result = sample_mean_fisher_compressed(fluorescence, "Omega", jumps=10)
    assert result.value == pytest.approx(4.0 / 3.0, rel=1e-6)
    assert result.reference == pytest.approx(12.0, rel=1e-6)
    assert result.unit == "per jump"
    assert result.data_processing_ok


def test_data_processing_tolerance():
    entry = CompressedFisher(
        CompressionMode.TIMES_ONLY, 10.5, 0.2, 10.0, 0.1, "per record"
    )
    assert entry.tolerance == pytest.approx(3.0 * np.hypot(0.2, 0.1))
    assert entry.data_processing_ok
    entry.value = 11.0
    assert not entry.data_processing_ok


@pytest.mark.slow
def test_compression_report_of_thermometer(thermometer):
    report = compression_report(
        thermometer,
        StopRule(jumps=20),
        trajectories=300,
        seed=1,
        param="nbar",
        retained=["minus"],
    )
    assert [entry.mode for entry in report.entries] == list(CompressionMode)
    assert report.all_ok
    rows = list(report.rows())
    assert len(rows[0]) == len(COMPRESSION_HEADER)
    partial = report.entries[-1]
    assert partial.details["monitored"] == ["minus"]
