# Global imports
import logging
import os
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from jumpfisher.compression.compression import (
    COMPRESSION_HEADER,
    CompressionMode,
    compression_report,
)
from jumpfisher.errors import ConfigError, ModelModeError
from jumpfisher.estimation.ensemble_study import (
    StudyEstimator,
    run_study,
    write_study,
)
from jumpfisher.helpers import parse_assignments, parse_sweep, write_csv, write_json
from jumpfisher.model.builtin_models import BuiltinModel, builtin_handlers
from jumpfisher.model.lindblad_model import LindbladModel
from jumpfisher.model.model_importer import (
    ModelImporter,
    describe_model,
    load_model_file,
    read_config_file,
)
from jumpfisher.model.parameters_model import RunSettings
from jumpfisher.monitoring.export_fisher import (
    write_fisher_curve,
    write_trajectory_series,
)
from jumpfisher.monitoring.fisher_rate import asymptotic_rate, fisher_rate
from jumpfisher.monitoring.gillespie_fisher import fisher_matrix, gillespie_fisher
from jumpfisher.renewal.renewal_fisher import fisher_renewal, renewal_sweep
from jumpfisher.renewal.renewal_structure import check_renewal
from jumpfisher.trajectory.gillespie import StopRule, run_records
from jumpfisher.trajectory.records import (
    Ensemble,
    MeasurementRecord,
    read_records,
    write_records,
)
from jumpfisher.trajectory.wtd_tables import GridSpec

RENEWAL_SWEEP_HEADER = (
    "value",
    "fisher_per_jump",
    "fisher_channels",
    "fisher_times_given_channels",
    "channel_fraction",
)
RATE_SWEEP_HEADER = ("value", "fisher_rate", "stderr", "M")

Outputs = Dict[str, str]


# ---------------- SHARED ----------------


def load_settings(arguments: dict) -> Tuple[LindbladModel, RunSettings]:
    """Model and run settings: defaults < config file < command line."""
    overrides = parse_assignments(arguments.get("set"))
    settings = RunSettings()
    if arguments.get("config"):
        content = read_config_file(arguments["config"])
        settings = settings.merged(content.get("settings", {}))
        if "model" in content:
            model = load_model_file(arguments["config"], overrides)
        elif arguments.get("model"):
            model = _builtin(arguments["model"], overrides)
        else:
            raise ConfigError(f"{arguments['config']} has no 'model' entry")
    elif arguments.get("model"):
        model = _builtin(arguments["model"], overrides)
    else:
        raise ConfigError("Give a model with --model NAME or --config FILE")

    settings = settings.merged(
        {
            "seed": arguments.get("seed"),
            "threads": arguments.get("threads"),
            "trajectories": arguments.get("trajectories"),
            "grid_points": arguments.get("grid_points"),
            "dtheta": arguments.get("dtheta"),
        }
    )
    arguments["settings"] = settings.model_dump()
    arguments["model_params"] = model.params
    return model, settings


def _builtin(name: str, overrides: Dict[str, Any]) -> LindbladModel:
    return ModelImporter({"model": name, "params": {}}, overrides).get_model()


def stop_rule(arguments: dict, required: bool = True) -> Optional[StopRule]:
    jumps, time = arguments.get("stop_jumps"), arguments.get("stop_time")
    if jumps is None and time is None and not required:
        return None
    return StopRule(jumps=jumps, time=time)


def _grid(settings: RunSettings) -> GridSpec:
    return GridSpec(points=settings.grid_points)


def _out(arguments: dict, name: str) -> str:
    return os.path.join(arguments["out_dir"], name)


# ---------------- SIMULATE ----------------


def cmd_simulate(arguments: dict) -> Outputs:
    model, settings = load_settings(arguments)
    stop = stop_rule(arguments)
    records = run_records(
        model,
        stop,
        settings.trajectories,
        settings.seed,
        settings.threads,
        grid=_grid(settings),
    )
    path = write_records(_out(arguments, "records.jsonl"), records, settings.seed)
    return {"records": path}


# ---------------- FISHER ----------------


def _renewal_report(
    model: LindbladModel, param: Optional[str], settings: RunSettings
) -> dict:
    report = fisher_renewal(model, param, settings.dtheta)
    content = asdict(report)
    content["channel_fraction"] = report.channel_fraction
    return content


def cmd_fisher(arguments: dict) -> Outputs:
    model, settings = load_settings(arguments)
    mode = arguments["mode"]
    param = arguments.get("param")

    if mode == "renewal":
        verdict = check_renewal(model)
        if not verdict:
            raise ModelModeError(str(verdict))
        if arguments.get("sweep"):
            name, values = parse_sweep(arguments["sweep"])
            rows = [
                (
                    value,
                    report.fisher,
                    report.fisher_channels,
                    report.fisher_times,
                    report.channel_fraction,
                )
                for value, report in renewal_sweep(
                    model, param, name, values, settings.dtheta
                )
            ]
            path = write_csv(
                _out(arguments, "renewal_sweep.csv"), RENEWAL_SWEEP_HEADER, rows
            )
            return {"renewal_sweep": path}
        path = write_json(
            _out(arguments, "fisher_renewal.json"),
            _renewal_report(model, param, settings),
        )
        return {"fisher_renewal": path}

    if mode == "rate":
        stop = stop_rule(arguments)
        if stop.ensemble != Ensemble.TIME:
            raise ConfigError("Rate mode needs --stop-time")
        if arguments.get("sweep"):
            name, values = parse_sweep(arguments["sweep"])
            rows = []
            for value in values:
                estimate = fisher_rate(
                    model.with_params({name: value}),
                    settings.trajectories,
                    stop.time,
                    settings.seed,
                    param,
                    settings.threads,
                    grid=_grid(settings),
                    dtheta=settings.dtheta,
                )
                rows.append(
                    (
                        value,
                        estimate.long_time_average,
                        estimate.long_time_stderr,
                        estimate.trajectories,
                    )
                )
            path = write_csv(_out(arguments, "rate_sweep.csv"), RATE_SWEEP_HEADER, rows)
            return {"rate_sweep": path}
        estimate = fisher_rate(
            model,
            settings.trajectories,
            stop.time,
            settings.seed,
            param,
            settings.threads,
            grid=_grid(settings),
            dtheta=settings.dtheta,
        )
        path = write_fisher_curve(_out(arguments, "fisher_rate.csv"), estimate)
        return {"fisher_rate": path}

    if mode == "matrix":
        params = [name.strip() for name in (arguments.get("params") or "").split(",")]
        params = [name for name in params if name] or list(model.param_names)
        estimate = fisher_matrix(
            model,
            params,
            stop_rule(arguments),
            settings.trajectories,
            settings.seed,
            settings.threads,
            grid=_grid(settings),
            dtheta=settings.dtheta,
        )
        path = write_json(_out(arguments, "fisher_matrix.json"), asdict(estimate))
        return {"fisher_matrix": path}

    if mode == "compressed":
        report = compression_report(
            model,
            stop_rule(arguments),
            settings.trajectories,
            settings.seed,
            param,
            modes=_modes(arguments.get("compression") or "times-only"),
            retained=_labels(arguments.get("retain")),
            efficiencies=parse_assignments(arguments.get("efficiency")),
            threads=settings.threads,
            dtheta=settings.dtheta,
        )
        path = write_csv(
            _out(arguments, "fisher_compressed.csv"), COMPRESSION_HEADER, report.rows()
        )
        return {"fisher_compressed": path}

    # gillespie
    stop = stop_rule(arguments)
    estimate = gillespie_fisher(
        model,
        stop,
        settings.trajectories,
        settings.seed,
        param,
        settings.threads,
        grid=_grid(settings),
        dtheta=settings.dtheta,
        keep_series=bool(arguments.get("series")),
    )
    curve = write_fisher_curve(_out(arguments, "fisher_curve.csv"), estimate)
    outputs = {"fisher_curve": curve}
    if stop.ensemble == Ensemble.TIME:
        fit = asymptotic_rate(estimate)
        outputs["linear_fit"] = write_json(
            _out(arguments, "fisher_linear_fit.json"), fit._asdict()
        )
    if arguments.get("series"):
        outputs["trajectory_series"] = write_trajectory_series(
            _out(arguments, "fisher_series.jsonl"), estimate
        )
    return outputs


def _labels(text: Optional[str]) -> Optional[List[str]]:
    if not text:
        return None
    return [label.strip() for label in text.split(",") if label.strip()]


def _modes(text: Optional[str]) -> Optional[List[CompressionMode]]:
    modes = []
    for label in _labels(text) or []:
        try:
            modes.append(CompressionMode(label))
        except ValueError as err:
            raise ConfigError(f"Unknown compression mode '{label}'") from err
    return modes or None


# ---------------- ESTIMATE ----------------


def _interval(text: Optional[str], value: float) -> Tuple[float, float]:
    if not text:
        return 0.5 * value, 1.5 * value
    try:
        low, high = (float(part) for part in text.split(":"))
    except ValueError as err:
        raise ConfigError(f"Interval must look like low:high, got '{text}'") from err
    return low, high


def _fisher_per_record(
    model: LindbladModel,
    records: List[MeasurementRecord],
    param: Optional[str],
    settings: RunSettings,
    stop: Optional[StopRule],
) -> Optional[float]:
    verdict = check_renewal(model)
    if verdict:
        per_jump = fisher_renewal(verdict, param, settings.dtheta).fisher
        return per_jump * float(np.mean([len(record) for record in records]))
    if stop is None:
        logging.warning("No Cramer-Rao reference: give --stop-jumps or --stop-time")
        return None
    estimate = gillespie_fisher(
        model,
        stop,
        settings.trajectories,
        settings.seed + 1,
        param,
        settings.threads,
        grid=_grid(settings),
        dtheta=settings.dtheta,
    )
    return estimate.final


def cmd_estimate(arguments: dict) -> Outputs:
    model, settings = load_settings(arguments)
    param = arguments.get("param") or model.default_param
    stop = stop_rule(arguments, required=not arguments.get("records"))
    outputs: Outputs = {}
    if arguments.get("records"):
        records = read_records(arguments["records"])
    else:
        records = run_records(
            model,
            stop,
            settings.trajectories,
            settings.seed,
            settings.threads,
            grid=_grid(settings),
        )
        outputs["records"] = write_records(
            _out(arguments, "records.jsonl"), records, settings.seed
        )

    true_value = model.value(param)
    fisher = arguments.get("fisher_per_record")
    if fisher is None:
        fisher = _fisher_per_record(model, records, param, settings, stop)
    study = run_study(
        records,
        model,
        true_value,
        _interval(arguments.get("interval"), true_value),
        fisher_per_record=fisher,
        estimator=StudyEstimator(arguments.get("estimator") or "mle"),
        param=param,
        tol=settings.tol,
        threads=settings.threads,
    )
    csv_path, json_path = write_study(arguments["out_dir"], study)
    outputs.update({"estimates": csv_path, "summary": json_path})
    return outputs


# ---------------- COMPRESS ----------------


def cmd_compress(arguments: dict) -> Outputs:
    model, settings = load_settings(arguments)
    report = compression_report(
        model,
        stop_rule(arguments),
        settings.trajectories,
        settings.seed,
        arguments.get("param"),
        modes=_modes(arguments.get("modes")),
        retained=_labels(arguments.get("retain")),
        efficiencies=parse_assignments(arguments.get("efficiency")),
        threads=settings.threads,
        dtheta=settings.dtheta,
    )
    if not report.all_ok:
        logging.warning("Data-processing inequality violated beyond 3 stderr")
    path = write_csv(
        _out(arguments, "compression.csv"), COMPRESSION_HEADER, report.rows()
    )
    return {"compression": path}


# ---------------- MODEL ----------------


def cmd_model(arguments: dict) -> Outputs:
    if arguments["action"] == "list":
        for member in BuiltinModel:
            defaults = builtin_handlers[member]().params
            print(f"{member.value}: {defaults}")
        return {}
    if not arguments.get("name"):
        raise ConfigError("model describe needs a model name")
    model = _builtin(arguments["name"], parse_assignments(arguments.get("set")))
    description = describe_model(model)
    for key, value in description.items():
        print(f"{key}: {value}")
    return {}


command_handlers = {
    "simulate": cmd_simulate,
    "fisher": cmd_fisher,
    "estimate": cmd_estimate,
    "compress": cmd_compress,
    "model": cmd_model,
}
