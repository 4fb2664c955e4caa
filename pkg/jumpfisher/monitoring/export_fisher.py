# Global imports
import json
import logging
from typing import Union

from jumpfisher.helpers import write_csv
from jumpfisher.monitoring.fisher_rate import FisherRateEstimate
from jumpfisher.monitoring.gillespie_fisher import FisherEstimate

FISHER_CURVE_HEADER = ("grid_value", "mean_tr_xi_sq", "stderr", "M")
FISHER_RATE_HEADER = ("t", "mean_rate", "stderr", "M")


class ExporterFisherCurve:
    def __init__(self, estimate: Union[FisherEstimate, FisherRateEstimate]):
        self.input = estimate
        self.output = (
            self.curve_rows()
            if isinstance(self.input, FisherEstimate)
            else self.rate_rows()
            if isinstance(self.input, FisherRateEstimate)
            else logging.error("Unknown Fisher estimate format")
        )

    def curve_rows(self):
        estimate = self.input
        return FISHER_CURVE_HEADER, [
            (value, mean, stderr, estimate.trajectories)
            for value, mean, stderr in zip(
                estimate.grid, estimate.mean, estimate.stderr
            )
        ]

    def rate_rows(self):
        estimate = self.input
        return FISHER_RATE_HEADER, [
            (epoch, mean, stderr, estimate.trajectories)
            for epoch, mean, stderr in zip(
                estimate.epochs, estimate.mean, estimate.stderr
            )
        ]

    def export(self, path: str) -> str:
        header, rows = self.output
        return write_csv(path, header, rows)


def write_fisher_curve(
    path: str, estimate: Union[FisherEstimate, FisherRateEstimate]
) -> str:
    return ExporterFisherCurve(estimate).export(path)


def write_trajectory_series(path: str, estimate: FisherEstimate) -> str:
    """One JSON line per trajectory with its tr(xi) and tr(xi)^2 series."""
    if estimate.scores is None:
        raise ValueError("Estimate was computed without per-trajectory series")
    with open(file=path, mode="w", encoding="utf-8") as out:
        for index, scores in enumerate(estimate.scores):
            line = {
                "trajectory": index,
                "grid": estimate.grid.tolist(),
                "tr_xi": scores.tolist(),
                "tr_xi_sq": (scores**2).tolist(),
            }
            out.write(json.dumps(line) + "\n")
    logging.info(f"Wrote {len(estimate.scores)} trajectory series to {path}")
    return path
