# Global imports
import json

import numpy as np
import pytest

from conftest import make_record
from jumpfisher.errors import ConfigError, NonPositiveDefiniteError
from jumpfisher.model.builtin_models import coupled_qubits, resonant_fluorescence
from jumpfisher.monitoring.export_fisher import (
    FISHER_CURVE_HEADER,
    write_fisher_curve,
    write_trajectory_series,
)
from jumpfisher.monitoring.fisher_rate import asymptotic_rate, fisher_rate
from jumpfisher.monitoring.gillespie_fisher import (
    fisher_matrix,
    gillespie_fisher,
    observation_grid,
    project_psd,
)
from jumpfisher.monitoring.monitoring_operator import init_monitor
from jumpfisher.renewal.renewal_fisher import fisher_renewal
from jumpfisher.trajectory.gillespie import StopRule, record_probability


def _within(value, expected, stderr, factor=4.0):
    return abs(value - expected) <= factor * stderr


def test_observation_grids():
    np.testing.assert_array_equal(observation_grid(StopRule(jumps=3)), [0, 1, 2, 3])
    grid = observation_grid(StopRule(time=2.0), epochs=5)
    np.testing.assert_allclose(grid, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_fixed_initial_state_has_no_score(thermometer):
    state = init_monitor(thermometer, "nbar")
    np.testing.assert_array_equal(state.xi, np.zeros((2, 2)))
    assert state.trace_xi == 0.0


def test_poisson_clock_jump_ensemble(clock):
    estimate = gillespie_fisher(clock, StopRule(jumps=20), trajectories=500, seed=3)
    # F(N) = N / gamma^2 for gamma = 2
    assert estimate.grid[-1] == 20
    assert estimate.mean[0] == 0.0
    assert _within(estimate.final, 5.0, estimate.final_stderr)
    assert _within(estimate.mean_score[-1], 0.0, estimate.score_stderr[-1])


def test_poisson_clock_time_ensemble(clock):
    estimate = gillespie_fisher(
        clock, StopRule(time=5.0), trajectories=500, seed=8, epochs=11
    )
    # F(t) = t / gamma
    assert _within(estimate.final, 2.5, estimate.final_stderr)
    np.testing.assert_allclose(estimate.grid, np.linspace(0.0, 5.0, 11))


def test_fisher_curve_is_deterministic(clock):
    stop = StopRule(jumps=10)
    first = gillespie_fisher(clock, stop, trajectories=20, seed=1, threads=1)
    second = gillespie_fisher(clock, stop, trajectories=20, seed=1, threads=4)
    np.testing.assert_array_equal(first.mean, second.mean)


def test_too_few_trajectories(clock):
    with pytest.raises(ConfigError):
        gillespie_fisher(clock, StopRule(jumps=3), trajectories=1, seed=0)


def test_poisson_clock_information_rate(clock):
    estimate = fisher_rate(clock, trajectories=10, horizon=2.0, seed=0, epochs=21)
    # I = gamma, dI = 1 along every trajectory
    np.testing.assert_allclose(estimate.mean, 0.5, rtol=1e-8)
    assert estimate.long_time_average == pytest.approx(0.5, rel=1e-8)


def test_linear_growth_in_time(clock):
    estimate = gillespie_fisher(
        clock, StopRule(time=6.0), trajectories=1000, seed=21, epochs=61
    )
    fit = asymptotic_rate(estimate)
    assert fit.slope == pytest.approx(0.5, abs=0.15)
    assert fit.r_squared > 0.9
    with pytest.raises(ConfigError):
        asymptotic_rate(estimate, window=(5.95, 6.0))


def test_projection_onto_psd_matrices():
    matrix, clamped = project_psd(np.diag([1.0, -0.01]), np.full((2, 2), 0.01))
    assert clamped
    np.testing.assert_allclose(matrix, np.diag([1.0, 0.0]), atol=1e-12)
    untouched, clamped = project_psd(np.eye(2), np.zeros((2, 2)))
    assert not clamped
    np.testing.assert_array_equal(untouched, np.eye(2))
    with pytest.raises(NonPositiveDefiniteError):
        project_psd(np.diag([1.0, -1.0]), np.full((2, 2), 0.01))


def test_decoupled_qubit_is_invisible():
    coupled = coupled_qubits(gamma=1.0, Omega_A=0.7, Omega_B=0.5, g=0.0)
    fluorescence = resonant_fluorescence(Omega=1.0, Gamma=1.0)
    record = make_record([0.8, 1.7, 0.4], channel="emission", final_stretch=0.3)
    _, log_coupled = record_probability(coupled, record)
    _, log_single = record_probability(fluorescence, record)
    assert log_coupled == pytest.approx(log_single, abs=1e-9)


def test_exports(tmp_path, clock):
    estimate = gillespie_fisher(
        clock, StopRule(jumps=4), trajectories=5, seed=2, keep_series=True
    )
    curve = tmp_path / "curve.csv"
    write_fisher_curve(str(curve), estimate)
    lines = curve.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(FISHER_CURVE_HEADER)
    assert len(lines) == 6

    series = tmp_path / "series.jsonl"
    write_trajectory_series(str(series), estimate)
    rows = [json.loads(line) for line in series.read_text().splitlines()]
    assert len(rows) == 5
    np.testing.assert_allclose(rows[0]["tr_xi_sq"], np.square(rows[0]["tr_xi"]))

    rate = fisher_rate(clock, trajectories=3, horizon=1.0, seed=0, epochs=5)
    write_fisher_curve(str(tmp_path / "rate.csv"), rate)
    assert (tmp_path / "rate.csv").exists()


def test_series_needs_kept_scores(tmp_path, clock):
    estimate = gillespie_fisher(clock, StopRule(jumps=2), trajectories=3, seed=0)
    with pytest.raises(ValueError):
        write_trajectory_series(str(tmp_path / "series.jsonl"), estimate)


@pytest.mark.slow
def test_thermometry_monte_carlo_matches_renewal(thermometer):
    jumps = 50
    estimate = gillespie_fisher(
        thermometer, StopRule(jumps=jumps), trajectories=1000, seed=13, param="nbar"
    )
    expected = jumps * fisher_renewal(thermometer, "nbar").fisher
    # the first waiting time from |g> adds an O(1) offset
    assert abs(estimate.final - expected) <= 4.0 * estimate.final_stderr + 1.0


@pytest.mark.slow
def test_decoupled_qubits_monte_carlo():
    stop = StopRule(jumps=30)
    coupled = gillespie_fisher(
        coupled_qubits(gamma=1.0, Omega_B=0.5, g=0.0),
        stop,
        trajectories=800,
        seed=5,
        param="gamma",
    )
    single = gillespie_fisher(
        resonant_fluorescence(Omega=1.0, Gamma=1.0),
        stop,
        trajectories=800,
        seed=6,
        param="Gamma",
    )
    spread = np.hypot(coupled.final_stderr, single.final_stderr)
    assert abs(coupled.final - single.final) <= 4.0 * spread


@pytest.mark.slow
def test_fisher_matrix_of_thermometer(thermometer):
    estimate = fisher_matrix(
        thermometer, ["nbar", "Omega"], StopRule(jumps=30), trajectories=400, seed=3
    )
    assert estimate.params == ["nbar", "Omega"]
    np.testing.assert_allclose(estimate.matrix, estimate.matrix.T)
    assert np.linalg.eigvalsh(estimate.matrix).min() >= -1e-10
    diagonal = gillespie_fisher(
        thermometer, StopRule(jumps=30), trajectories=400, seed=3, param="nbar"
    )
    assert estimate.matrix[0, 0] == pytest.approx(diagonal.final, rel=1e-10)
