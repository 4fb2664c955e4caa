# Global imports
import json
import logging
from typing import Any, Dict, Optional

import numpy as np
from pydantic import ValidationError

from jumpfisher.errors import ConfigError
from jumpfisher.model.builtin_models import BuiltinModel, build_builtin, builtin_options
from jumpfisher.model.lindblad_model import JumpChannel, LindbladModel
from jumpfisher.model.parameters_model import (
    BuiltinModelConfig,
    CustomModelConfig,
    MatrixTriple,
    ThetaEntry,
)
from jumpfisher.renewal.renewal_structure import check_renewal


def format_validation_error(err: ValidationError) -> str:
    problems = []
    for item in err.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{location}: {item['msg']}")
    return "; ".join(problems)


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(file=path, mode="r", encoding="utf-8") as config_file:
            content = json.load(config_file)
    except FileNotFoundError as err:
        raise ConfigError(f"Config file {path} not found") from err
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from err
    if not isinstance(content, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return content


def interpolate_triple(triple: MatrixTriple, center: float, step: float):
    """Quadratic interpolant through the triple and its exact derivative."""
    slope = (triple.dtheta_plus - triple.dtheta_minus) / (2.0 * step)
    curvature = (triple.dtheta_plus - 2.0 * triple.base + triple.dtheta_minus) / (
        step**2
    )

    def matrix_at(theta: np.ndarray) -> np.ndarray:
        offset = theta[0] - center
        return triple.base + offset * slope + 0.5 * offset**2 * curvature

    def derivative_at(theta: np.ndarray, index: int) -> np.ndarray:
        return slope + (theta[0] - center) * curvature

    return matrix_at, derivative_at


class ModelImporter:
    def __init__(self, model_config: Dict[str, Any], overrides: Optional[Dict] = None):
        self.input = model_config
        self.overrides = overrides or {}
        self.output = self.extract_model()

    def get_model(self) -> LindbladModel:
        return self.output

    def extract_model(self) -> LindbladModel:
        name = str(self.input.get("model", "")).strip().lower()
        if not name:
            raise ConfigError("Model config needs a 'model' entry")
        try:
            if name == "custom":
                return self.extract_custom(CustomModelConfig(**self.input))
            return self.extract_builtin(BuiltinModelConfig(**self.input))
        except ValidationError as err:
            raise ConfigError(
                f"Invalid model config: {format_validation_error(err)}"
            ) from err

    def extract_builtin(self, config: BuiltinModelConfig) -> LindbladModel:
        params = {**config.params, **self.overrides}
        structural = builtin_options[config.model]
        for key, value in params.items():
            if key in structural:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(
                    f"{config.model.value}: parameter '{key}' must be a number"
                )
        model = build_builtin(config.model.value, params)
        logging.info(f"Built model {model.name} at {model.params}")
        return model

    def extract_custom(self, config: CustomModelConfig) -> LindbladModel:
        theta_cfg = config.theta
        center = theta_cfg.value
        value = float(self.overrides.pop(theta_cfg.name, center))
        if self.overrides:
            raise ConfigError(
                f"custom model has no parameters {sorted(self.overrides)}, "
                f"only '{theta_cfg.name}'"
            )

        if theta_cfg.enters == ThetaEntry.NONE:
            hamiltonian = MatrixTriple.constant(config.hamiltonian.base)
            matrices = [MatrixTriple.constant(c.matrix.base) for c in config.channels]
        else:
            hamiltonian = config.hamiltonian
            matrices = [channel.matrix for channel in config.channels]

        hamiltonian_at, hamiltonian_derivative_at = interpolate_triple(
            hamiltonian, center, theta_cfg.step
        )
        channels = []
        for channel_cfg, triple in zip(config.channels, matrices):
            operator_at, derivative_at = interpolate_triple(
                triple, center, theta_cfg.step
            )
            channels.append(
                JumpChannel(
                    label=channel_cfg.label,
                    operator_at=operator_at,
                    efficiency=channel_cfg.efficiency,
                    monitored=channel_cfg.monitored,
                    derivative_at=derivative_at,
                )
            )

        initial_state = config.initial_state
        if initial_state is None and "initial_state" not in self.input:
            initial_state = np.zeros((config.dim, config.dim), dtype=complex)
            initial_state[0, 0] = 1.0
        model = LindbladModel(
            name="custom",
            dim=config.dim,
            param_names=(theta_cfg.name,),
            theta=(value,),
            hamiltonian_at=hamiltonian_at,
            hamiltonian_derivative_at=hamiltonian_derivative_at,
            channels=tuple(channels),
            initial_state_at=(
                None if initial_state is None else (lambda theta: initial_state)
            ),
            description="User-defined model",
        )
        model.liouvillian()
        logging.info(
            f"Built custom model, d={config.dim}, {len(channels)} channels, "
            f"{theta_cfg.name}={value}"
        )
        return model


def load_model_file(
    path: str, overrides: Optional[Dict[str, Any]] = None
) -> LindbladModel:
    content = read_config_file(path)
    model_config = {key: value for key, value in content.items() if key != "settings"}
    return ModelImporter(model_config, dict(overrides or {})).get_model()


def describe_model(model: LindbladModel) -> Dict[str, Any]:
    verdict = check_renewal(model)
    description = {
        "name": model.name,
        "description": model.description,
        "dim": model.dim,
        "params": model.params,
        "estimation_param": model.default_param,
        "channels": [
            {
                "label": channel.label,
                "efficiency": channel.efficiency,
                "monitored": channel.monitored,
            }
            for channel in model.channels
        ],
        "renewal": bool(verdict),
    }
    if not verdict:
        description["renewal_reasons"] = list(verdict.reasons)
    return description


def builtin_names():
    return [member.value for member in BuiltinModel]
