# Global imports
import json
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import make_record
from jumpfisher.errors import ConfigError, ModelModeError
from jumpfisher.estimation.ensemble_study import (
    STUDY_HEADER,
    StudyEstimator,
    run_study,
    write_study,
)
from jumpfisher.estimation.likelihood import (
    ReplayKernel,
    loglik_renewal,
    replay_score,
)
from jumpfisher.estimation.mle import (
    Verdict,
    mean_waiting_time_estimator,
    mle_monitoring,
    mle_renewal,
    most_frequent_pair,
    pair_waiting_times,
)
from jumpfisher.model.builtin_models import qubit_thermometer
from jumpfisher.quantum.operators import projector
from jumpfisher.renewal.renewal_fisher import fisher_renewal
from jumpfisher.trajectory.gillespie import StopRule, record_probability, run_records
from jumpfisher.trajectory.records import MeasurementRecord, Origin

INTERVAL = (0.1, 5.0)


def test_poisson_clock_score(clock):
    record = make_record([1.0, 2.0])
    # d/dgamma [2 log gamma - 3 gamma]
    assert replay_score(record, clock, 2.0) == pytest.approx(2.0 / 2.0 - 3.0, abs=1e-6)
    stretched = make_record([1.0, 2.0], final_stretch=1.0)
    assert replay_score(stretched, clock, 2.0) == pytest.approx(-3.0, abs=1e-6)


def test_replay_matches_record_probability(thermometer):
    record = run_records(thermometer, StopRule(time=4.0), trajectories=1, seed=9)[0]
    kernel = ReplayKernel(thermometer, "nbar")
    replay = kernel.replay(record, 1.1)
    _, log_value = record_probability(thermometer.with_params(nbar=1.1), record)
    assert replay.loglik == pytest.approx(log_value, rel=1e-9)
    assert replay.jumps == len(record)


def test_replay_checks_the_record_origin(thermometer):
    record = run_records(thermometer, StopRule(jumps=3), trajectories=1, seed=9)[0]
    assert record.origin == Origin.INITIAL
    assert ReplayKernel(thermometer, "nbar").origin == Origin.INITIAL
    steady = qubit_thermometer(
        nbar=1.5, omega=1.0, Omega=1.0, gamma=1.0, initial_state="steady"
    )
    kernel = ReplayKernel(steady, "nbar")
    assert kernel.origin == Origin.STEADY
    with pytest.raises(ConfigError):
        kernel.replay(record, 1.5)
    assert kernel.replay(record, 1.5, conditioned=True).jumps == 2
    unlabelled = record.model_copy(update={"origin": None})
    assert np.isfinite(kernel.replay(unlabelled, 1.5).loglik)
    prepared = ReplayKernel(steady, "nbar", initial_state=projector(2, 1))
    assert prepared.origin == Origin.INITIAL


def test_mle_on_jump_count_record(clock):
    result = mle_monitoring(make_record([1.0, 2.0]), clock, INTERVAL)
    assert result.verdict == Verdict.INTERIOR
    assert result.estimate == pytest.approx(2.0 / 3.0, abs=1e-4)
    assert result.trace_xi < 1e-3
    assert result.loglik == pytest.approx(2.0 * np.log(2.0 / 3.0) - 2.0, abs=1e-6)


def test_routes_agree_on_poisson_clock(clock):
    record = make_record([1.0, 1.0, 3.0])
    renewal = mle_renewal(record, clock, INTERVAL)
    conditioned = mle_monitoring(record, clock, INTERVAL, conditioned=True)
    moments = mean_waiting_time_estimator([record], clock, INTERVAL)
    for result in (renewal, conditioned, moments):
        assert result.verdict == Verdict.INTERIOR
        assert result.estimate == pytest.approx(0.5, abs=1e-4)


def test_routes_agree_on_thermometer(thermometer):
    record = run_records(thermometer, StopRule(jumps=40), trajectories=1, seed=17)[0]
    interval = (0.2, 10.0)
    renewal = mle_renewal(record, thermometer, interval, param="nbar")
    conditioned = mle_monitoring(
        record, thermometer, interval, param="nbar", conditioned=True
    )
    assert renewal.verdict == conditioned.verdict
    if renewal.verdict == Verdict.INTERIOR:
        assert renewal.estimate == pytest.approx(conditioned.estimate, rel=1e-3)


def test_boundary_verdict(clock):
    # score 1/gamma - 10 stays negative on the interval
    result = mle_monitoring(make_record([10.0]), clock, (0.5, 3.0))
    assert result.verdict == Verdict.BOUNDARY_LOW
    assert result.estimate == 0.5
    assert not result.is_estimate


class ParabolicKernel:
    """Replay stand-in whose log-likelihood is curvature * (value - 1)^2."""

    def __init__(self, curvature: float):
        self.curvature = curvature

    def replay(self, record, value, conditioned=False):
        offset = value - 1.0
        return SimpleNamespace(
            score=2.0 * self.curvature * offset, loglik=self.curvature * offset**2
        )


@pytest.mark.parametrize(
    "interval, verdict",
    [((0.0, 3.0), Verdict.BOUNDARY_HIGH), ((0.0, 1.5), Verdict.BOUNDARY_LOW)],
)
def test_likelihood_minimum_is_not_an_estimate(clock, interval, verdict):
    result = mle_monitoring(
        make_record([1.0]), clock, interval, kernel=ParabolicKernel(1.0)
    )
    assert result.verdict == verdict
    edge = interval[0] if verdict == Verdict.BOUNDARY_LOW else interval[1]
    assert result.estimate == edge
    assert not result.is_estimate


def test_likelihood_maximum_is_interior(clock):
    result = mle_monitoring(
        make_record([1.0]), clock, (0.0, 3.0), kernel=ParabolicKernel(-1.0)
    )
    assert result.verdict == Verdict.INTERIOR
    assert result.estimate == pytest.approx(1.0, abs=1e-5)


def test_flat_likelihood(clock):
    result = mle_monitoring(MeasurementRecord(jumps=[]), clock, (1.0, 3.0))
    assert result.verdict == Verdict.FLAT
    assert result.estimate == pytest.approx(2.0)
    assert result.is_estimate


def test_invalid_interval(clock):
    with pytest.raises(ConfigError):
        mle_monitoring(make_record([1.0]), clock, (2.0, 1.0))


def test_renewal_likelihood_needs_two_jumps(clock):
    with pytest.raises(ConfigError):
        loglik_renewal(make_record([1.0]), 2.0, clock)
    assert loglik_renewal(make_record([5.0, 1.0]), 2.0, clock) == pytest.approx(
        np.log(2.0) - 2.0
    )


def test_unmonitored_channel_in_record(clock):
    with pytest.raises(ConfigError):
        replay_score(make_record([1.0], channel="flash"), clock, 2.0)


def test_renewal_routes_reject_coupled_qubits(coupled):
    record = make_record([1.0, 2.0], channel="emission")
    with pytest.raises(ModelModeError):
        mle_renewal(record, coupled, (0.1, 1.0))


def test_waiting_time_pairs(thermometer):
    records = [
        make_record([1.0, 2.0, 3.0], channel="plus"),
        MeasurementRecord(
            jumps=[
                {"tau": 0.5, "channel": "plus"},
                {"tau": 0.7, "channel": "minus"},
            ]
        ),
    ]
    assert most_frequent_pair(records) == ("plus", "plus")
    np.testing.assert_allclose(pair_waiting_times(records, "plus", "minus"), [0.7])
    with pytest.raises(ConfigError):
        most_frequent_pair([make_record([1.0])])
    with pytest.raises(ConfigError):
        mean_waiting_time_estimator(
            records, thermometer, (0.5, 3.0), pair=("minus", "minus")
        )


def test_poisson_clock_study(tmp_path, clock):
    jumps = 50
    records = run_records(clock, StopRule(jumps=jumps), trajectories=200, seed=31)
    fisher = jumps / 2.0**2
    study = run_study(records, clock, 2.0, (0.5, 8.0), fisher_per_record=fisher)
    assert study.excluded == 0
    assert study.mean == pytest.approx(2.0, abs=0.15)
    assert study.mse == pytest.approx(study.variance + study.bias**2)
    assert study.cr_bound == pytest.approx(0.08)
    assert 0.6 < study.efficiency < 1.6
    assert study.saturates(band=0.6)

    csv_path, json_path = write_study(str(tmp_path), study)
    lines = open(csv_path, encoding="utf-8").read().splitlines()
    assert lines[0] == ",".join(STUDY_HEADER)
    assert len(lines) == 201
    assert lines[1].endswith("interior")
    with open(json_path, encoding="utf-8") as source:
        summary = json.load(source)
    assert summary["estimator"] == "mle"
    assert summary["records"] == 200
    assert summary["saturated"] == study.saturates()


def test_studies_are_thread_independent(clock):
    records = run_records(clock, StopRule(jumps=10), trajectories=8, seed=2)
    serial = run_study(records, clock, 2.0, (0.2, 20.0))
    parallel = run_study(records, clock, 2.0, (0.2, 20.0), threads=4)
    np.testing.assert_array_equal(serial.estimates, parallel.estimates)


def test_failed_inversions_are_excluded(clock):
    records = [make_record([1.0, 1.0, 3.0]), make_record([1.0, 0.01, 0.01])]
    study = run_study(
        records, clock, 0.5, (0.1, 5.0), estimator=StudyEstimator.MEAN_WAIT
    )
    # mean wait 0.01 needs gamma = 100, outside the interval
    assert study.excluded == 1
    assert study.estimates == pytest.approx([0.5], abs=1e-4)


@pytest.mark.slow
def test_thermometer_mle_saturates_the_bound(thermometer):
    jumps = 100
    records = run_records(
        thermometer, StopRule(jumps=jumps), trajectories=300, seed=4
    )
    fisher = jumps * fisher_renewal(thermometer, "nbar").fisher
    study = run_study(
        records,
        thermometer,
        1.5,
        (0.3, 6.0),
        fisher_per_record=fisher,
        estimator=StudyEstimator.MLE_RENEWAL,
        param="nbar",
    )
    assert study.excluded < 10
    assert 0.6 < study.efficiency < 1.6
