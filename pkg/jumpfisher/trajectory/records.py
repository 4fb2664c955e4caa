# Global imports
import json
import logging
from enum import Enum
from typing import Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError, field_validator

from jumpfisher.errors import ConfigError


class Ensemble(Enum):
    # stop after a fixed number of jumps
    JUMPS = "jumps"
    # stop at a fixed final time, the record ends with a no-jump stretch
    TIME = "time"


class Origin(Enum):
    # state given by the model or passed to the simulator
    INITIAL = "initial"
    # steady state at the simulated parameter
    STEADY = "steady"


class Jump(BaseModel):
    tau: float
    channel: str

    @field_validator("tau")
    @classmethod
    def positive_tau(cls, field: float) -> float:
        if not field > 0:
            raise ValueError(f"waiting times must be positive, got {field}")
        return field


class MeasurementRecord(BaseModel):
    trajectory: int = 0
    seed: Optional[int] = None
    jumps: List[Jump] = []
    final_stretch: Optional[float] = None
    # None for records not produced by the simulator
    origin: Optional[Origin] = None

    @field_validator("final_stretch")
    @classmethod
    def non_negative_stretch(cls, field: Optional[float]) -> Optional[float]:
        if field is not None and field < 0:
            raise ValueError(f"final stretch must be non-negative, got {field}")
        return field

    @property
    def ensemble(self) -> Ensemble:
        return Ensemble.JUMPS if self.final_stretch is None else Ensemble.TIME

    @property
    def taus(self) -> np.ndarray:
        return np.array([jump.tau for jump in self.jumps], dtype=float)

    @property
    def labels(self) -> List[str]:
        return [jump.channel for jump in self.jumps]

    @property
    def duration(self) -> float:
        return float(self.taus.sum()) + (self.final_stretch or 0.0)

    def __len__(self) -> int:
        return len(self.jumps)


def write_records(
    path: str, records: Iterable[MeasurementRecord], seed: Optional[int] = None
) -> str:
    count = 0
    with open(file=path, mode="w", encoding="utf-8") as out:
        for record in records:
            if seed is not None and record.seed is None:
                record = record.model_copy(update={"seed": seed})
            out.write(record.model_dump_json() + "\n")
            count += 1
    logging.info(f"Wrote {count} records to {path}")
    return path


def read_records(path: str) -> List[MeasurementRecord]:
    records = []
    try:
        with open(file=path, mode="r", encoding="utf-8") as source:
            for number, line in enumerate(source, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(MeasurementRecord(**json.loads(line)))
                except (json.JSONDecodeError, TypeError, ValidationError) as err:
                    raise ConfigError(f"{path}, line {number}: invalid record ({err})")
    except FileNotFoundError as err:
        raise ConfigError(f"Record file {path} not found") from err
    if not records:
        raise ConfigError(f"Record file {path} holds no records")
    logging.info(f"Read {len(records)} records from {path}")
    return records
