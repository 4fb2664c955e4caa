# Global imports
import numpy as np
import pytest

from conftest import make_record, pure_decay
from jumpfisher.errors import ConfigError, DarkSubspaceError, GridOverflowError
from jumpfisher.model.lindblad_model import assemble
from jumpfisher.trajectory.gillespie import (
    StopRule,
    conditional_states,
    invert_survival,
    record_probability,
    run_records,
    sample_channel,
    sample_waiting_time,
)
from jumpfisher.trajectory.records import (
    Ensemble,
    MeasurementRecord,
    Origin,
    read_records,
    write_records,
)
from jumpfisher.trajectory.rng_streams import trajectory_rng
from jumpfisher.trajectory.wtd_tables import GridSpec, KrausTable, precompute_tables


@pytest.mark.parametrize(
    "kwargs", [{}, {"jumps": 3, "time": 1.0}, {"jumps": 0}, {"time": -2.0}]
)
def test_invalid_stop_rules(kwargs):
    with pytest.raises(ConfigError):
        StopRule(**kwargs)


def test_stop_rule_ensembles():
    assert StopRule(jumps=5).ensemble is Ensemble.JUMPS
    assert StopRule(time=2.0).ensemble is Ensemble.TIME
    assert str(StopRule(time=2.0)) == "t_f=2"


def test_streams_depend_only_on_seed_and_index():
    first = trajectory_rng(7, 3).random(4)
    np.testing.assert_array_equal(first, trajectory_rng(7, 3).random(4))
    assert not np.allclose(first, trajectory_rng(7, 4).random(4))
    assert not np.allclose(first, trajectory_rng(8, 3).random(4))


def test_records_do_not_depend_on_threads(thermometer):
    stop = StopRule(jumps=20)
    serial = run_records(thermometer, stop, trajectories=6, seed=11, threads=1)
    parallel = run_records(thermometer, stop, trajectories=6, seed=11, threads=3)
    assert serial == parallel
    assert [record.trajectory for record in parallel] == list(range(6))
    other = run_records(thermometer, stop, trajectories=6, seed=12)
    assert other != serial


def test_jump_count_records(thermometer):
    records = run_records(thermometer, StopRule(jumps=15), trajectories=4, seed=0)
    for record in records:
        assert len(record) == 15
        assert record.final_stretch is None
        assert record.ensemble is Ensemble.JUMPS
        assert set(record.labels) <= {"plus", "minus"}
        assert np.all(record.taus > 0)


def test_final_time_records(thermometer):
    records = run_records(thermometer, StopRule(time=5.0), trajectories=5, seed=2)
    for record in records:
        assert record.ensemble is Ensemble.TIME
        assert record.final_stretch >= 0.0
        assert record.duration == pytest.approx(5.0)


def test_poisson_clock_mean_waiting_time(clock):
    records = run_records(clock, StopRule(jumps=200), trajectories=20, seed=5)
    taus = np.concatenate([record.taus for record in records])
    # 4000 exponential draws with mean 1/2
    assert taus.mean() == pytest.approx(0.5, abs=0.05)


def test_record_probability_of_poisson_clock(clock):
    record = make_record([1.0, 2.0])
    value, log_value = record_probability(clock, record)
    assert log_value == pytest.approx(2.0 * np.log(2.0) - 6.0)
    assert value == pytest.approx(4.0 * np.exp(-6.0))

    stretched = make_record([1.0, 2.0], final_stretch=0.5)
    _, log_stretched = record_probability(clock, stretched)
    assert log_stretched == pytest.approx(log_value - 1.0)
    _, log_open = record_probability(clock, stretched, include_final=False)
    assert log_open == pytest.approx(log_value)


def test_record_probability_of_impossible_channel_order():
    model = pure_decay()
    _, log_value = record_probability(model, make_record([0.5, 0.5], "emission"))
    assert log_value == -np.inf


def test_conditional_states_of_pure_decay():
    states = conditional_states(pure_decay(), make_record([0.7], "emission"))
    np.testing.assert_allclose(states[0], np.diag([1.0, 0.0]))
    np.testing.assert_allclose(states[1], np.diag([0.0, 1.0]), atol=1e-12)


def test_dark_state_is_rejected():
    with pytest.raises(DarkSubspaceError):
        run_records(pure_decay(), StopRule(jumps=2), trajectories=1, seed=0)


def test_channel_draw_on_dark_weights():
    with pytest.raises(DarkSubspaceError):
        sample_channel(np.zeros(2), np.random.default_rng(0))
    assert sample_channel(np.array([0.0, 1.0]), np.random.default_rng(0)) == 1


def test_invert_survival():
    times = np.linspace(0.0, 1.0, 11)
    survival = 1.0 - times
    assert invert_survival(times, survival, 0.75) == pytest.approx(0.25)
    assert invert_survival(times, np.ones(11), 0.5) is None


def test_waiting_time_beyond_grid(clock):
    table = KrausTable(assemble(clock), GridSpec(points=11, t_max=0.1), clock.name)
    rho = np.ones((1, 1), dtype=complex)
    # survival exp(-0.2) stays above most uniform draws
    with pytest.raises(GridOverflowError):
        for seed in range(50):
            sample_waiting_time(rho, table, np.random.default_rng(seed))
    assert sample_waiting_time(rho, table, np.random.default_rng(0), 0.05) is None


def test_grid_resolution(thermometer):
    table = precompute_tables(thermometer)
    assert isinstance(table, KrausTable)
    assert table.grid.points in (2000, 3999)
    assert table.snap(table.grid.spacing * 3.2) == 3


def test_records_file_round_trip(tmp_path, thermometer):
    records = run_records(thermometer, StopRule(time=3.0), trajectories=3, seed=4)
    path = str(tmp_path / "records.jsonl")
    write_records(path, records, seed=4)
    loaded = read_records(path)
    assert loaded == records
    assert all(record.seed == 4 for record in loaded)
    assert all(record.origin == Origin.INITIAL for record in loaded)


def test_invalid_records_files(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="no records"):
        read_records(str(empty))

    broken = tmp_path / "broken.jsonl"
    broken.write_text(
        '{"jumps": [{"tau": 0.5, "channel": "click"}]}\n{"jumps": [\n',
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="line 2"):
        read_records(str(broken))

    negative = tmp_path / "negative.jsonl"
    negative.write_text('{"jumps": [{"tau": -1, "channel": "click"}]}\n')
    with pytest.raises(ConfigError, match="line 1"):
        read_records(str(negative))

    with pytest.raises(ConfigError, match="not found"):
        read_records(str(tmp_path / "missing.jsonl"))


def test_record_duration():
    record = MeasurementRecord(jumps=[], final_stretch=2.5)
    assert record.duration == 2.5
    assert len(record) == 0
