"""
Run-level configuration models. Construction validates every field; a failure
surfaces as ConfigError with code ``config.<field>``.
"""
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.config import Config
from src.core.errors import ConfigError, config_error_from, nested_config_error


class _ConfigModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True, extra="forbid")

    def __init__(self, **data: Any):
        # build nested config dicts here so their errors keep the full field path
        for name, info in type(self).model_fields.items():
            key = info.alias if info.alias in data else name
            nested_type = info.annotation
            if (
                isinstance(data.get(key), dict)
                and isinstance(nested_type, type)
                and issubclass(nested_type, _ConfigModel)
            ):
                try:
                    data[key] = nested_type(**data[key])
                except ConfigError as exc:
                    raise nested_config_error(key, exc) from None
        try:
            super().__init__(**data)
        except ValidationError as exc:
            aliases = {name: info.alias for name, info in type(self).model_fields.items() if info.alias}
            raise config_error_from(exc, aliases) from None

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]):
        return cls(**data)

    def with_updates(self, **updates: Any):
        merged = self.model_dump(by_alias=True)
        merged.update({k: v for k, v in updates.items() if v is not None})
        return type(self)(**merged)


class SolverConfig(_ConfigModel):
    """Pruning strength and tolerances of the tree program solver"""
    lam: float = Field(1.0, alias="lambda", gt=0)
    violation_tolerance: float = Field(1e-12, ge=0)
    interior_tolerance: float = Field(1e-12, ge=0)


class OracleConfig(_ConfigModel):
    """Budgets of the slow reference solvers.

    The projected-gradient oracle works in the scaled coordinates b = sqrt(lambda) * a,
    where the objective's gradient is 1-Lipschitz, so ``pg_step`` must not exceed 1.
    """
    pg_step: float = Field(0.25, gt=0, le=1.0)
    pg_iters: int = Field(200000, gt=0)
    dykstra_iters: int = Field(500, gt=0)
    dykstra_tolerance: float = Field(1e-13, gt=0)
    grid_step: float = Field(1e-6, gt=0, lt=1)
    convergence_window: int = Field(100, gt=0)
    convergence_tolerance: float = Field(1e-12, gt=0)
    max_problem_size: int = Field(default_factory=lambda: Config.ORACLE_MAX_SIZE, gt=0)


class PredictorSpec(_ConfigModel):
    """Shape of f_phi: linear map or ELU MLP over [x ; z] (or z alone)"""
    kind: Literal["linear", "mlp"] = "linear"
    num_layers: int = Field(2, ge=1)
    hidden_dim: int = Field(64, ge=1)
    dropout: float = Field(0.0, ge=0, lt=1)
    use_features: bool = True

    @property
    def layer_count(self) -> int:
        return 1 if self.kind == "linear" else self.num_layers


class TrainConfig(_ConfigModel):
    """Everything a training run needs besides the data"""
    depth: int = Field(3, ge=1)
    lam: float = Field(1.0, alias="lambda", gt=0)
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(512, ge=1)
    max_epochs: int = Field(100, ge=1)
    patience: int = Field(10, ge=1)
    lr_decay_factor: float = Field(10.0, ge=1)
    lr_plateau_epochs: int = Field(2, ge=1)
    optimizer: Literal["adam", "qhadam"] = "qhadam"
    beta1: Optional[float] = Field(None, gt=0, lt=1)
    beta2: float = Field(0.999, gt=0, lt=1)
    nu1: float = Field(0.7, ge=0, le=1)
    eps: float = Field(1e-8, gt=0)
    seed: int = 0
    loss: Literal["mse", "bce"] = "mse"
    split_activation: Literal["identity", "elu"] = "identity"
    predictor: PredictorSpec = Field(default_factory=PredictorSpec)
    resolve_per_batch: bool = False

    @field_validator("depth")
    @classmethod
    def _depth_within_guard(cls, v: int) -> int:
        if v > Config.MAX_DEPTH:
            raise ValueError(f"depth must be at most {Config.MAX_DEPTH}")
        return v

    @property
    def effective_beta1(self) -> float:
        if self.beta1 is not None:
            return self.beta1
        return 0.995 if self.optimizer == "qhadam" else 0.9

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(lam=self.lam)


def merge_config(defaults: Dict[str, Any], file_values: Dict[str, Any], flag_values: Dict[str, Any]) -> TrainConfig:
    """Flags override the config file, which overrides defaults"""
    merged: Dict[str, Any] = dict(defaults)
    for layer in (file_values, flag_values):
        for key, value in layer.items():
            if value is None:
                continue
            if key == "lam":
                key = "lambda"
            if key == "predictor" and isinstance(value, dict):
                nested = {k: v for k, v in value.items() if v is not None}
                merged["predictor"] = {**merged.get("predictor", {}), **nested}
            else:
                merged[key] = value
    return TrainConfig(**merged)
