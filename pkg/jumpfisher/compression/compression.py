# Global imports
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, field_validator

from jumpfisher.errors import ConfigError, DarkSubspaceError
from jumpfisher.helpers import map_ordered
from jumpfisher.model.lindblad_model import (
    LindbladModel,
    ParamKey,
    Unraveling,
    displace,
    dynamical_activity,
)
from jumpfisher.monitoring.gillespie_fisher import (
    EPOCHS,
    FisherEstimate,
    gillespie_fisher,
)
from jumpfisher.monitoring.monitoring_operator import init_monitor
from jumpfisher.quantum.superoperators import inverse, trace_row, vectorize
from jumpfisher.renewal.renewal_fisher import (
    fisher_channels,
    fisher_renewal,
    sample_mean_fisher,
)
from jumpfisher.renewal.renewal_structure import check_renewal
from jumpfisher.trajectory.gillespie import DARK_TOL, StopRule, sample_channel
from jumpfisher.trajectory.rng_streams import trajectory_rng
from jumpfisher.trajectory.wtd_tables import GridSpec

log = logging.getLogger(__name__)

STDERR_FACTOR = 3.0


class CompressionMode(Enum):
    CHANNELS_ONLY = "channels-only"
    TIMES_ONLY = "times-only"
    SAMPLE_MEAN = "sample-mean"
    PARTIAL_MONITORING = "partial-monitoring"


class CompressionSpec(BaseModel):
    mode: CompressionMode
    retained: Optional[List[str]] = None
    efficiencies: Dict[str, float] = {}

    @field_validator("mode", mode="before")
    @classmethod
    def parse_mode(cls, field: object) -> CompressionMode:
        if isinstance(field, CompressionMode):
            return field
        try:
            return CompressionMode(str(field))
        except ValueError as err:
            raise ValueError(
                f"unknown compression mode '{field}', expected one of "
                f"{[mode.value for mode in CompressionMode]}"
            ) from err

    @field_validator("efficiencies", mode="before")
    @classmethod
    def efficiencies_range(cls, field: Dict[str, float]) -> Dict[str, float]:
        for label, value in (field or {}).items():
            if not 0.0 <= float(value) <= 1.0:
                raise ValueError(f"efficiency of '{label}' must lie in [0, 1]")
        return dict(field or {})

    def check(self, model: LindbladModel) -> None:
        monitored = set(model.monitored_labels)
        unknown = set(self.retained or []) - monitored
        unknown |= set(self.efficiencies) - set(model.labels)
        if unknown:
            raise ConfigError(
                f"{model.name}: channels {sorted(unknown)} are not monitored "
                f"(monitored: {sorted(monitored)})"
            )


@dataclass
class CompressedFisher:
    """Information left after compression next to the full-record value.

    ``unit`` is "per jump" or "per record"; both values share it.
    """

    mode: CompressionMode
    value: float
    stderr: float
    reference: float
    reference_stderr: float
    unit: str
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def tolerance(self) -> float:
        return STDERR_FACTOR * float(np.hypot(self.stderr, self.reference_stderr))

    @property
    def data_processing_ok(self) -> bool:
        return self.value <= self.reference + self.tolerance


# ---------------- CHANNELS ONLY ----------------


def symbol_maps(unraveling: Unraveling) -> List[np.ndarray]:
    """M_k = -J_k L0^-1: one step of the label-only (time-marginalized) record."""
    inv = inverse(unraveling.nojump)
    return [-jump.matrix @ inv for jump in unraveling.jumps]


def _channels_monte_carlo(
    model: LindbladModel,
    param: Optional[ParamKey],
    jumps: int,
    trajectories: int,
    seed: int,
    threads: int,
    theta: Optional[np.ndarray],
    dtheta: Optional[float],
    initial_state: Optional[np.ndarray],
):
    triple = displace(model, param, dtheta, theta=theta)
    maps = symbol_maps(triple.center)
    d_maps = [
        (plus - minus) / (2.0 * triple.dtheta)
        for plus, minus in zip(symbol_maps(triple.plus), symbol_maps(triple.minus))
    ]
    monitor = init_monitor(model, param, theta, dtheta, initial_state)
    rho0, xi0 = vectorize(monitor.rho), vectorize(monitor.xi)
    row = trace_row(model.dim)
    weight_rows = np.array([row @ step for step in maps])

    def worker(index: int) -> float:
        rng = trajectory_rng(seed, index)
        rho, xi = rho0, xi0
        for _ in range(jumps):
            weights = np.real(weight_rows @ rho)
            k = sample_channel(weights, rng)
            image = maps[k] @ rho
            weight = float(np.real(row @ image))
            if weight < DARK_TOL:
                raise DarkSubspaceError(
                    f"Symbol '{triple.center.labels[k]}' sampled with weight "
                    f"{weight:.3g}"
                )
            xi = (d_maps[k] @ rho + maps[k] @ xi) / weight
            rho = image / weight
        return float(np.real(row @ xi))

    scores = np.array(map_ordered(worker, trajectories, threads))
    information = scores**2
    return (
        float(information.mean()),
        float(information.std(ddof=1) / np.sqrt(trajectories)),
        triple.param,
    )


def channels_only_fisher(
    model: LindbladModel,
    param: Optional[ParamKey] = None,
    theta: Optional[np.ndarray] = None,
    dtheta: Optional[float] = None,
    jumps: int = 200,
    trajectories: int = 1000,
    seed: int = 0,
    threads: int = 1,
    initial_state: Optional[np.ndarray] = None,
):
    """Per-jump information of the channel labels with every time tag discarded.

    Renewal models use the channel-chain closed form. Other models run the
    monitoring recursion on the discrete maps M_k over ``jumps`` symbols.
    Returns (value, stderr); stderr is 0 for the closed form.
    """
    verdict = check_renewal(model, theta)
    if verdict:
        return fisher_channels(verdict, param, dtheta), 0.0
    log.info(f"{model.name} is not renewal: channels-only information by Monte Carlo")
    mean, stderr, name = _channels_monte_carlo(
        model, param, jumps, trajectories, seed, threads, theta, dtheta, initial_state
    )
    log.info(
        f"Channels-only information about {name}: {mean / jumps:.6g} "
        f"+- {stderr / jumps:.2g} per jump"
    )
    return mean / jumps, stderr / jumps


# ---------------- TIMES ONLY ----------------


def times_only_fisher(
    model: LindbladModel,
    stop: StopRule,
    trajectories: int,
    seed: int,
    param: Optional[ParamKey] = None,
    threads: int = 1,
    theta: Optional[np.ndarray] = None,
    grid: Optional[GridSpec] = None,
    dtheta: Optional[float] = None,
    epochs: int = EPOCHS,
    initial_state: Optional[np.ndarray] = None,
) -> FisherEstimate:
    """Monte Carlo information of the jump times with the labels discarded.

    The record keeps the fact that each jump belongs to a monitored channel:
    the channels are merged into J = sum_k J_k. The merged process is in
    general not renewal, so it always goes through the monitoring recursion.
    """
    return gillespie_fisher(
        model,
        stop,
        trajectories,
        seed,
        param,
        threads,
        theta,
        grid,
        dtheta,
        epochs,
        initial_state,
        transform=Unraveling.merged,
    )


# ---------------- PARTIAL MONITORING ----------------


def partial_monitoring(
    model: LindbladModel,
    retained: Optional[Sequence[str]] = None,
    efficiencies: Optional[Dict[str, float]] = None,
) -> LindbladModel:
    """Rebuild ``model`` with fewer monitored channels or lower efficiencies.

    Channels outside ``retained`` and channels with efficiency 0 leave the
    monitored set; the Liouvillian is unchanged.
    """
    efficiencies = efficiencies or {}
    CompressionSpec(
        mode=CompressionMode.PARTIAL_MONITORING,
        retained=list(retained) if retained is not None else None,
        efficiencies=efficiencies,
    ).check(model)
    keep = set(model.monitored_labels if retained is None else retained)

    channels = []
    for channel in model.channels:
        efficiency = float(efficiencies.get(channel.label, channel.efficiency))
        monitored = channel.monitored and channel.label in keep and efficiency > 0.0
        channels.append(replace(channel, efficiency=efficiency, monitored=monitored))
    if not any(channel.monitored for channel in channels):
        raise ConfigError(
            f"{model.name}: nothing observable, every channel is discarded or has "
            f"zero efficiency"
        )
    dropped = [c.label for c in channels if not c.monitored and c.label in keep]
    if dropped:
        log.debug(f"Channels {dropped} have zero efficiency and leave the record")
    return replace(model, name=f"{model.name}-partial", channels=tuple(channels))


# ---------------- SAMPLE MEAN ----------------


def sample_mean_fisher_compressed(
    model: LindbladModel,
    param: Optional[ParamKey] = None,
    jumps: int = 1,
    dtheta: Optional[float] = None,
    waiting_times: Optional[Sequence[np.ndarray]] = None,
    reference: Optional[float] = None,
    reference_stderr: float = 0.0,
) -> CompressedFisher:
    """Sample-mean information per jump against the full-record value.

    Renewal models get their full-record value from quadrature when no
    ``reference`` is given.
    """
    report = sample_mean_fisher(model, param, jumps, dtheta, waiting_times)
    if reference is None:
        reference = fisher_renewal(model, param, dtheta).fisher
    result = CompressedFisher(
        mode=CompressionMode.SAMPLE_MEAN,
        value=report.fisher_per_jump,
        stderr=0.0,
        reference=float(reference),
        reference_stderr=reference_stderr,
        unit="per jump",
        details={
            "mean": report.mean,
            "d_mean": report.d_mean,
            "variance": report.variance,
            "covariance_sum": report.covariance_sum,
            "lags": report.lags,
        },
    )
    if not result.data_processing_ok:
        log.warning(
            f"Sample-mean information {result.value:.6g} exceeds the full-record "
            f"value {result.reference:.6g}"
        )
    return result


# ---------------- REPORT ----------------


@dataclass
class CompressionReport:
    model_name: str
    param: str
    stop: str
    entries: List[CompressedFisher]

    @property
    def all_ok(self) -> bool:
        return all(entry.data_processing_ok for entry in self.entries)

    def rows(self):
        for entry in self.entries:
            yield (
                entry.mode.value,
                entry.value,
                entry.stderr,
                entry.reference,
                entry.reference_stderr,
                entry.unit,
                entry.data_processing_ok,
            )


COMPRESSION_HEADER = (
    "mode",
    "fisher",
    "stderr",
    "full_fisher",
    "full_stderr",
    "unit",
    "data_processing_ok",
)


def _jump_stop(model: LindbladModel, stop: StopRule) -> StopRule:
    if stop.jumps is not None:
        return stop
    return StopRule(jumps=max(2, int(round(stop.time * dynamical_activity(model)))))


def _time_stop(model: LindbladModel, stop: StopRule) -> StopRule:
    if stop.time is not None:
        return stop
    return StopRule(time=stop.jumps / dynamical_activity(model))


def compression_report(
    model: LindbladModel,
    stop: StopRule,
    trajectories: int,
    seed: int,
    param: Optional[ParamKey] = None,
    modes: Optional[Sequence[CompressionMode]] = None,
    retained: Optional[Sequence[str]] = None,
    efficiencies: Optional[Dict[str, float]] = None,
    threads: int = 1,
    dtheta: Optional[float] = None,
) -> CompressionReport:
    """Information of every compressed record next to the full record.

    Channels-only and sample-mean values are per jump; times-only uses the
    N-ensemble and partial monitoring the t_f-ensemble, both per record. The
    full-record runs share the seed of the compressed ones.
    """
    modes = list(modes or CompressionMode)
    name = model.param_names[model.param_index(param)]
    jump_stop = _jump_stop(model, stop)
    renewal = check_renewal(model)
    cache: Dict[StopRule, FisherEstimate] = {}

    def full(rule: StopRule) -> FisherEstimate:
        if rule not in cache:
            cache[rule] = gillespie_fisher(
                model, rule, trajectories, seed, name, threads, dtheta=dtheta
            )
        return cache[rule]

    def per_jump_reference():
        if renewal:
            return fisher_renewal(renewal, name, dtheta).fisher, 0.0
        estimate = full(jump_stop)
        return estimate.final / jump_stop.jumps, estimate.final_stderr / jump_stop.jumps

    entries = []
    for mode in modes:
        if mode == CompressionMode.CHANNELS_ONLY:
            value, stderr = channels_only_fisher(
                model,
                name,
                dtheta=dtheta,
                jumps=jump_stop.jumps,
                trajectories=trajectories,
                seed=seed,
                threads=threads,
            )
            reference, reference_stderr = per_jump_reference()
            entries.append(
                CompressedFisher(
                    mode, value, stderr, reference, reference_stderr, "per jump"
                )
            )
        elif mode == CompressionMode.TIMES_ONLY:
            estimate = times_only_fisher(
                model, jump_stop, trajectories, seed, name, threads, dtheta=dtheta
            )
            reference = full(jump_stop)
            entries.append(
                CompressedFisher(
                    mode,
                    estimate.final,
                    estimate.final_stderr,
                    reference.final,
                    reference.final_stderr,
                    "per record",
                )
            )
        elif mode == CompressionMode.SAMPLE_MEAN:
            reference, reference_stderr = per_jump_reference()
            entries.append(
                sample_mean_fisher_compressed(
                    model,
                    name,
                    jump_stop.jumps,
                    dtheta,
                    reference=reference,
                    reference_stderr=reference_stderr,
                )
            )
        else:
            time_stop = _time_stop(model, stop)
            partial = partial_monitoring(model, retained, efficiencies)
            estimate = gillespie_fisher(
                partial, time_stop, trajectories, seed, name, threads, dtheta=dtheta
            )
            reference = full(time_stop)
            entries.append(
                CompressedFisher(
                    mode,
                    estimate.final,
                    estimate.final_stderr,
                    reference.final,
                    reference.final_stderr,
                    "per record",
                    details={"monitored": list(partial.monitored_labels)},
                )
            )

    report = CompressionReport(
        model_name=model.name, param=name, stop=str(stop), entries=entries
    )
    for entry in entries:
        level = logging.INFO if entry.data_processing_ok else logging.WARNING
        log.log(
            level,
            f"{entry.mode.value}: {entry.value:.6g} +- {entry.stderr:.2g} vs full "
            f"{entry.reference:.6g} +- {entry.reference_stderr:.2g} ({entry.unit})",
        )
    return report
