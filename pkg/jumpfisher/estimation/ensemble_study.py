# Global imports
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from jumpfisher.errors import ConvergenceError
from jumpfisher.estimation.likelihood import RenewalKernel, ReplayKernel
from jumpfisher.estimation.mle import (
    EstimationResult,
    Verdict,
    default_tol,
    mean_waiting_time_estimator,
    mle_monitoring,
    mle_renewal,
)
from jumpfisher.helpers import map_ordered, write_csv, write_json
from jumpfisher.model.lindblad_model import LindbladModel, ParamKey
from jumpfisher.trajectory.records import MeasurementRecord

STUDY_HEADER = ("record_id", "theta_hat", "loglik", "iterations", "verdict")
# relative distance of mse * F from 1 still counted as saturating the bound
SATURATION_BAND = 0.25


class StudyEstimator(Enum):
    MLE = "mle"
    MLE_RENEWAL = "mle-renewal"
    MEAN_WAIT = "mean-wait"


@dataclass
class EnsembleStudy:
    param: str
    true_value: float
    estimator: StudyEstimator
    results: List[EstimationResult]
    record_ids: List[int]
    fisher_per_record: Optional[float] = None
    excluded: int = 0
    summary: Dict[str, float] = field(default_factory=dict)

    @property
    def estimates(self) -> np.ndarray:
        kept = [result.estimate for result in self.results if result.is_estimate]
        return np.array(kept, dtype=float)

    @property
    def mean(self) -> float:
        return float(self.estimates.mean())

    @property
    def variance(self) -> float:
        # ddof=0 keeps mse = variance + bias^2 exact
        return float(self.estimates.var())

    @property
    def bias(self) -> float:
        return self.mean - self.true_value

    @property
    def mse(self) -> float:
        return float(np.mean((self.estimates - self.true_value) ** 2))

    @property
    def cr_bound(self) -> Optional[float]:
        if not self.fisher_per_record:
            return None
        return 1.0 / self.fisher_per_record

    @property
    def efficiency(self) -> Optional[float]:
        """MSE times the Fisher information of one record (1 at saturation)."""
        if not self.fisher_per_record:
            return None
        return self.mse * self.fisher_per_record

    def saturates(self, band: float = SATURATION_BAND) -> Optional[bool]:
        if self.efficiency is None:
            return None
        return abs(self.efficiency - 1.0) <= band

    def summarize(self) -> Dict[str, float]:
        self.summary = {
            "param": self.param,
            "true_value": self.true_value,
            "estimator": self.estimator.value,
            "records": len(self.results),
            "excluded": self.excluded,
            "mean": self.mean,
            "variance": self.variance,
            "bias": self.bias,
            "mse": self.mse,
            "cr_bound": self.cr_bound,
            "efficiency": self.efficiency,
            "saturated": self.saturates(),
        }
        return self.summary


def run_study(
    records: Sequence[MeasurementRecord],
    model: LindbladModel,
    true_value: float,
    interval: Tuple[float, float],
    fisher_per_record: Optional[float] = None,
    estimator: StudyEstimator = StudyEstimator.MLE,
    param: Optional[ParamKey] = None,
    tol: Optional[float] = None,
    threads: int = 1,
    pair: Optional[Tuple[str, str]] = None,
    conditioned: bool = False,
) -> EnsembleStudy:
    """Estimate the parameter on every record and compare with 1/F.

    Boundary verdicts and failed inversions are excluded from the statistics
    and counted in ``excluded``.
    """
    tol = tol or default_tol(interval)
    name = model.param_names[model.param_index(param)]
    replay = ReplayKernel(model, name, quantum=tol / 10.0)
    renewal = RenewalKernel(model, name, quantum=tol / 10.0)

    def worker(index: int) -> EstimationResult:
        record = records[index]
        if estimator == StudyEstimator.MLE:
            return mle_monitoring(
                record, model, interval, tol, name, replay, conditioned=conditioned
            )
        if estimator == StudyEstimator.MLE_RENEWAL:
            return mle_renewal(record, model, interval, tol, name, renewal)
        try:
            return mean_waiting_time_estimator(
                [record], model, interval, pair, name, tol, renewal
            )
        except ConvergenceError as err:
            logging.debug(f"Record {record.trajectory}: {err}")
            edge = interval[0]
            return EstimationResult(
                estimate=edge,
                interval=tuple(interval),
                verdict=Verdict.BOUNDARY_LOW,
                iterations=0,
                trace_xi=float("nan"),
                loglik=float("nan"),
                diagnostic=str(err),
            )

    results = map_ordered(worker, len(records), threads)
    study = EnsembleStudy(
        param=name,
        true_value=float(true_value),
        estimator=estimator,
        results=results,
        record_ids=[record.trajectory for record in records],
        fisher_per_record=fisher_per_record,
        excluded=sum(not result.is_estimate for result in results),
    )
    if study.excluded:
        logging.warning(
            f"{study.excluded} of {len(results)} records gave no interior estimate"
        )
    study.summarize()
    logging.info(
        f"{estimator.value} study of {name}: mean {study.mean:.6g}, "
        f"variance {study.variance:.3g}, mse {study.mse:.3g}"
        f"{f', 1/F {study.cr_bound:.3g}' if study.cr_bound else ''}"
    )
    return study


def write_study(out_dir: str, study: EnsembleStudy, name: str = "study"):
    """Per-record estimates CSV and summary JSON."""
    rows = [
        (record_id, result.estimate, result.loglik, result.iterations, result.verdict)
        for record_id, result in zip(study.record_ids, study.results)
    ]
    csv_path = write_csv(
        os.path.join(out_dir, f"{name}_estimates.csv"), STUDY_HEADER, rows
    )
    summary = study.summary or study.summarize()
    json_path = write_json(os.path.join(out_dir, f"{name}_summary.json"), summary)
    return csv_path, json_path
