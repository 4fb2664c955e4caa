# Global imports
from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    ValidationError,
    field_validator,
    model_validator,
)

from jumpfisher.errors import ConfigError
from jumpfisher.model.builtin_models import BuiltinModel


def parse_complex_matrix(field: Any) -> np.ndarray:
    """Rows of entries, each entry a number or a [re, im] pair."""
    if isinstance(field, np.ndarray):
        return field.astype(complex)
    if not isinstance(field, list) or not all(isinstance(row, list) for row in field):
        raise ValueError("a matrix is a list of rows")
    rows = []
    for row in field:
        entries = []
        for entry in row:
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    raise ValueError(f"complex entries are [re, im] pairs, got {entry}")
                entries.append(complex(float(entry[0]), float(entry[1])))
            else:
                entries.append(complex(float(entry)))
        rows.append(entries)
    if len({len(row) for row in rows}) > 1:
        raise ValueError("matrix rows have different lengths")
    matrix = np.array(rows, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"matrix must be square, got shape {matrix.shape}")
    return matrix


# ---------------- CUSTOM MODEL ----------------
class MatrixTriple(BaseModel):
    """A matrix known at theta and at theta +- step."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    base: np.ndarray
    dtheta_plus: np.ndarray
    dtheta_minus: np.ndarray

    @field_validator("base", "dtheta_plus", "dtheta_minus", mode="before")
    @classmethod
    def parse_matrix(cls, field: Any) -> np.ndarray:
        return parse_complex_matrix(field)

    @model_validator(mode="after")
    def same_shapes(self) -> "MatrixTriple":
        if not self.base.shape == self.dtheta_plus.shape == self.dtheta_minus.shape:
            raise ValueError("base, dtheta_plus and dtheta_minus differ in shape")
        return self

    @classmethod
    def constant(cls, matrix: np.ndarray) -> "MatrixTriple":
        return cls(base=matrix, dtheta_plus=matrix, dtheta_minus=matrix)


def parse_matrix_or_triple(field: Any) -> MatrixTriple:
    if isinstance(field, MatrixTriple):
        return field
    if isinstance(field, dict):
        return MatrixTriple(**field)
    return MatrixTriple.constant(parse_complex_matrix(field))


class ChannelConfig(BaseModel):
    label: str
    matrix: MatrixTriple
    efficiency: float = 1.0
    monitored: bool = True

    @field_validator("matrix", mode="before")
    @classmethod
    def parse_matrix(cls, field: Any) -> MatrixTriple:
        return parse_matrix_or_triple(field)

    @field_validator("efficiency")
    @classmethod
    def efficiency_range(cls, field: float) -> float:
        if not 0.0 <= field <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {field}")
        return field


class ThetaEntry(Enum):
    # theta moves every matrix along its (base, dtheta_plus, dtheta_minus) triple
    TRIPLES = "triples"
    # nothing depends on theta
    NONE = "none"


class ThetaConfig(BaseModel):
    name: str = "theta"
    value: float = 0.0
    step: float = 1e-3
    enters: ThetaEntry = ThetaEntry.TRIPLES

    @field_validator("step")
    @classmethod
    def positive_step(cls, field: float) -> float:
        if field <= 0:
            raise ValueError(f"step must be positive, got {field}")
        return field


class CustomModelConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: str = "custom"
    dim: int
    hamiltonian: MatrixTriple
    channels: List[ChannelConfig]
    theta: ThetaConfig = ThetaConfig()
    initial_state: Optional[np.ndarray] = None

    @field_validator("hamiltonian", mode="before")
    @classmethod
    def parse_hamiltonian(cls, field: Any) -> MatrixTriple:
        return parse_matrix_or_triple(field)

    @field_validator("initial_state", mode="before")
    @classmethod
    def parse_initial_state(cls, field: Any) -> Optional[np.ndarray]:
        if field is None or isinstance(field, str):
            return None
        return parse_complex_matrix(field)

    @model_validator(mode="after")
    def dimensions_match(self) -> "CustomModelConfig":
        shape = (self.dim, self.dim)
        if self.hamiltonian.base.shape != shape:
            raise ValueError(f"hamiltonian must be {self.dim}x{self.dim}")
        for channel in self.channels:
            if channel.matrix.base.shape != shape:
                raise ValueError(
                    f"channel '{channel.label}' must be {self.dim}x{self.dim}"
                )
        if self.initial_state is not None and self.initial_state.shape != shape:
            raise ValueError(f"initial_state must be {self.dim}x{self.dim}")
        return self


# ---------------- BUILT-IN MODEL ----------------
class BuiltinModelConfig(BaseModel):
    model: BuiltinModel
    params: Dict[str, Union[bool, int, float, str]] = {}

    @field_validator("model", mode="before")
    @classmethod
    def parse_model_name(cls, field: Any) -> BuiltinModel:
        if isinstance(field, BuiltinModel):
            return field
        try:
            return BuiltinModel(str(field).strip().lower())
        except ValueError as err:
            raise ValueError(
                f"unknown model '{field}', expected one of "
                f"{[member.value for member in BuiltinModel] + ['custom']}"
            ) from err


# ---------------- RUN ----------------
class RunSettings(BaseModel):
    seed: int = 0
    threads: int = 1
    trajectories: int = 100
    grid_points: int = 2000
    dtheta: Optional[float] = None
    tol: Optional[float] = None

    @field_validator("threads", "trajectories", "grid_points")
    @classmethod
    def at_least_one(cls, field: int) -> int:
        if field < 1:
            raise ValueError(f"must be at least 1, got {field}")
        return field

    @field_validator("seed", mode="before")
    @classmethod
    def seed_as_int(cls, field: Any) -> int:
        return int(field)

    def merged(self, overrides: Dict[str, Any]) -> "RunSettings":
        """Copy with every non-None override applied."""
        values = self.model_dump()
        values.update(
            {key: value for key, value in overrides.items() if value is not None}
        )
        try:
            return RunSettings(**values)
        except ValidationError as err:
            raise ConfigError(f"Invalid run settings: {err}") from err


class RunManifest(BaseModel):
    command: str
    config: Dict[str, Any]
    seed: int
    version: str
    wall_time: float
    outputs: Dict[str, str] = {}
