# Global imports
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from jumpfisher.errors import ConfigError, ConvergenceError
from jumpfisher.estimation.likelihood import (
    RenewalKernel,
    ReplayKernel,
    loglik_renewal,
)
from jumpfisher.model.lindblad_model import LindbladModel, ParamKey
from jumpfisher.renewal.renewal_fisher import pair_moments
from jumpfisher.renewal.renewal_structure import RenewalStructure
from jumpfisher.trajectory.records import MeasurementRecord

log = logging.getLogger(__name__)

MAX_EVALUATIONS = 200
TOL_FRACTION = 1e-6
FLAT_TOL = 1e-12


class Verdict(Enum):
    INTERIOR = "interior"
    BOUNDARY_LOW = "boundary-low"
    BOUNDARY_HIGH = "boundary-high"
    # the score vanishes on the whole interval
    FLAT = "flat"


@dataclass
class EstimationResult:
    estimate: float
    interval: Tuple[float, float]
    verdict: Verdict
    iterations: int
    trace_xi: float
    loglik: float
    diagnostic: str = ""

    @property
    def is_estimate(self) -> bool:
        return self.verdict in (Verdict.INTERIOR, Verdict.FLAT)


def _interval(interval: Sequence[float]) -> Tuple[float, float]:
    low, high = (float(value) for value in interval)
    if not low < high:
        raise ConfigError(f"Search interval must have low < high, got {interval}")
    return low, high


def default_tol(interval: Tuple[float, float]) -> float:
    return TOL_FRACTION * (interval[1] - interval[0])


def mle_monitoring(
    record: MeasurementRecord,
    model: LindbladModel,
    interval: Sequence[float],
    tol: Optional[float] = None,
    param: Optional[ParamKey] = None,
    kernel: Optional[ReplayKernel] = None,
    conditioned: bool = False,
) -> EstimationResult:
    """Maximum-likelihood estimate as the point where tr xi vanishes.

    The endpoints are evaluated first. A sign change of the score from + to -
    is refined by Brent's method; otherwise (tr xi)^2 is minimized over the
    interval. Its minimizer counts as the estimate only where the score falls
    through zero; any other outcome is returned as a boundary verdict at the
    endpoint of larger likelihood.
    """
    low, high = _interval(interval)
    tol = tol or default_tol((low, high))
    kernel = kernel or ReplayKernel(model, param, quantum=tol / 10.0)
    evaluations = [0]

    def score(value: float) -> float:
        evaluations[0] += 1
        return kernel.replay(record, value, conditioned=conditioned).score

    def result(value: float, verdict: Verdict, diagnostic: str = ""):
        replay = kernel.replay(record, value, conditioned=conditioned)
        return EstimationResult(
            estimate=float(value),
            interval=(low, high),
            verdict=verdict,
            iterations=evaluations[0],
            trace_xi=abs(replay.score),
            loglik=replay.loglik,
            diagnostic=diagnostic,
        )

    score_low, score_high = score(low), score(high)
    middle = 0.5 * (low + high)
    flat_ends = max(abs(score_low), abs(score_high)) < FLAT_TOL
    if flat_ends and abs(score(middle)) < FLAT_TOL:
        return result(middle, Verdict.FLAT, "flat likelihood")

    if score_low > 0.0 > score_high:
        value = brentq(score, low, high, xtol=tol, maxiter=MAX_EVALUATIONS)
        return result(value, Verdict.INTERIOR)

    search = minimize_scalar(
        lambda value: score(value) ** 2,
        bounds=(low, high),
        method="bounded",
        options={"xatol": tol, "maxiter": MAX_EVALUATIONS},
    )
    at_low, at_high = search.x - low < 2 * tol, high - search.x < 2 * tol
    if not (at_low or at_high) and search.success:
        # only a + to - crossing is a maximum; - to + is a likelihood minimum
        left, right = score(search.x - tol), score(search.x + tol)
        if left >= 0.0 >= right and left > right:
            return result(search.x, Verdict.INTERIOR)
        log.debug(
            f"Record {record.trajectory}: stationary point {search.x:.6g} is "
            f"not a likelihood maximum"
        )

    # no interior maximum: the maximum sits on the border
    if score_low <= 0.0 and score_high <= 0.0:
        verdict = Verdict.BOUNDARY_LOW
    elif score_low >= 0.0 and score_high >= 0.0:
        verdict = Verdict.BOUNDARY_HIGH
    else:
        loglik_low = kernel.replay(record, low, conditioned=conditioned).loglik
        loglik_high = kernel.replay(record, high, conditioned=conditioned).loglik
        verdict = (
            Verdict.BOUNDARY_LOW if loglik_low >= loglik_high else Verdict.BOUNDARY_HIGH
        )
    edge = low if verdict == Verdict.BOUNDARY_LOW else high
    log.debug(
        f"Record {record.trajectory}: likelihood maximal at the border {edge:.6g}"
    )
    return result(edge, verdict, "maximum on the interval border")


def mle_renewal(
    record: MeasurementRecord,
    model: LindbladModel,
    interval: Sequence[float],
    tol: Optional[float] = None,
    param: Optional[ParamKey] = None,
    kernel: Optional[RenewalKernel] = None,
) -> EstimationResult:
    """Direct bounded maximization of the renewal log-likelihood."""
    low, high = _interval(interval)
    tol = tol or default_tol((low, high))
    kernel = kernel or RenewalKernel(model, param, quantum=tol / 10.0)

    def objective(value: float) -> float:
        loglik = loglik_renewal(record, value, model, kernel=kernel)
        return -loglik if np.isfinite(loglik) else np.finfo(float).max

    search = minimize_scalar(
        objective,
        bounds=(low, high),
        method="bounded",
        options={"xatol": tol, "maxiter": MAX_EVALUATIONS},
    )
    verdict = Verdict.INTERIOR
    if search.x - low < 2 * tol:
        verdict = Verdict.BOUNDARY_LOW
    elif high - search.x < 2 * tol:
        verdict = Verdict.BOUNDARY_HIGH
    return EstimationResult(
        estimate=float(search.x),
        interval=(low, high),
        verdict=verdict,
        iterations=int(search.nfev),
        trace_xi=float("nan"),
        loglik=float(-search.fun),
    )


# ---------------- MEAN WAITING TIME ----------------


def mean_waiting_time(
    structure: RenewalStructure, previous: str, channel: str
) -> float:
    """Mean waiting time between a ``previous`` jump and a ``channel`` jump.

    <tau> = tr[J_k L0^-2 sigma_q] / (-tr[J_k L0^-1 sigma_q]).
    """
    first, _ = pair_moments(structure)
    return float(first[structure.index(channel), structure.index(previous)])


def pair_waiting_times(
    records: Sequence[MeasurementRecord], previous: str, channel: str
) -> np.ndarray:
    taus = []
    for record in records:
        labels = record.labels
        for j in range(1, len(labels)):
            if labels[j - 1] == previous and labels[j] == channel:
                taus.append(record.jumps[j].tau)
    return np.array(taus, dtype=float)


def most_frequent_pair(records: Sequence[MeasurementRecord]) -> Tuple[str, str]:
    pairs = Counter(
        (labels[j - 1], labels[j])
        for labels in (record.labels for record in records)
        for j in range(1, len(labels))
    )
    if not pairs:
        raise ConfigError("Records hold no consecutive jump pair")
    return pairs.most_common(1)[0][0]


def mean_waiting_time_estimator(
    records: Sequence[MeasurementRecord],
    model: LindbladModel,
    interval: Sequence[float],
    pair: Optional[Tuple[str, str]] = None,
    param: Optional[ParamKey] = None,
    tol: Optional[float] = None,
    kernel: Optional[RenewalKernel] = None,
) -> EstimationResult:
    """Invert theta -> <tau>_{q->k} at the empirical mean of the pair's waiting
    times. ``pair`` is (previous, channel); the most frequent one by default."""
    low, high = _interval(interval)
    tol = tol or default_tol((low, high))
    kernel = kernel or RenewalKernel(model, param, quantum=tol / 10.0)
    previous, channel = pair or most_frequent_pair(records)
    taus = pair_waiting_times(records, previous, channel)
    if taus.size == 0:
        raise ConfigError(f"Pair {previous} -> {channel} never observed")
    if taus.size == 1:
        log.warning(
            f"Pair {previous} -> {channel} observed once: the estimate has a large "
            f"variance"
        )
    target = float(taus.mean())

    def offset(value: float) -> float:
        return mean_waiting_time(kernel.structure(value), previous, channel) - target

    offset_low, offset_high = offset(low), offset(high)
    if offset_low * offset_high > 0.0:
        raise ConvergenceError(
            f"Empirical mean waiting time {target:.6g} outside the range "
            f"[{min(offset_low, offset_high) + target:.6g}, "
            f"{max(offset_low, offset_high) + target:.6g}] over {interval}"
        )
    value, report = brentq(
        offset, low, high, xtol=tol, maxiter=MAX_EVALUATIONS, full_output=True
    )
    return EstimationResult(
        estimate=float(value),
        interval=(low, high),
        verdict=Verdict.INTERIOR,
        iterations=int(report.function_calls),
        trace_xi=float("nan"),
        loglik=float("nan"),
        diagnostic=f"{taus.size} waiting times {previous} -> {channel}",
    )
