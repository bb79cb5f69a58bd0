import logging

import pytest

from src.core.config import Config, Settings
from src.core.errors import ArgumentError, ConfigError, LatentTreeError
from src.core.logger import setup_logging
from src.models.configs import OracleConfig, PredictorSpec, SolverConfig, TrainConfig, merge_config


def test_train_config_defaults():
    config = TrainConfig()
    assert config.learning_rate == 1e-3
    assert config.batch_size == 512
    assert config.max_epochs == 100
    assert config.patience == 10
    assert config.lr_decay_factor == 10.0
    assert config.lr_plateau_epochs == 2
    assert config.effective_beta1 == 0.995
    assert config.solver.lam == config.lam


@pytest.mark.parametrize(
    "field, value, code",
    [("lambda", 0.0, "config.lambda"), ("lambda", -1.0, "config.lambda"), ("patience", 0, "config.patience"),
     ("batch_size", 0, "config.batch_size"), ("learning_rate", 0.0, "config.learning_rate"),
     ("depth", 21, "config.depth")],
)
def test_invalid_fields_report_their_code(field, value, code):
    with pytest.raises(ConfigError) as exc:
        TrainConfig(**{field: value})
    assert exc.value.code == code
    assert exc.value.details["field"] == code.split(".", 1)[1]


def test_unknown_field_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(momentum=0.5)


def test_nested_predictor_error_path():
    with pytest.raises(ConfigError) as exc:
        TrainConfig(predictor={"dropout": 1.5})
    assert exc.value.code == "config.predictor.dropout"
    assert exc.value.details["field"] == "predictor.dropout"


def test_nested_error_path_through_merge():
    with pytest.raises(ConfigError) as exc:
        merge_config({}, {"predictor": {"kind": "mlp", "hidden_dim": 0}}, {})
    assert exc.value.code == "config.predictor.hidden_dim"


def test_nested_unknown_field_keeps_path():
    with pytest.raises(ConfigError) as exc:
        TrainConfig(predictor={"width": 3})
    assert exc.value.code == "config.predictor.width"


def test_merge_precedence():
    config = merge_config(
        {"depth": 2, "lambda": 1.0, "seed": 0},
        {"depth": 4, "lambda": 5.0, "predictor": {"kind": "mlp", "hidden_dim": 8}},
        {"lam": 2.0, "seed": None, "predictor": {"hidden_dim": 16, "dropout": None}},
    )
    assert config.depth == 4
    assert config.lam == 2.0
    assert config.seed == 0
    assert config.predictor == PredictorSpec(kind="mlp", hidden_dim=16)


def test_with_updates_ignores_none():
    config = SolverConfig(lam=3.0).with_updates(lam=None, violation_tolerance=1e-10)
    assert config.lam == 3.0
    assert config.violation_tolerance == 1e-10


def test_oracle_step_bounded():
    with pytest.raises(ConfigError):
        OracleConfig(pg_step=1.5)


def test_error_payload():
    error = ArgumentError("bad shape", code="argument.shape", rows=3)
    assert isinstance(error, LatentTreeError) and isinstance(error, ValueError)
    assert error.to_dict() == {"code": "argument.shape", "message": "bad shape", "details": {"rows": 3}}
    assert ConfigError("x").code == "config"


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("LT_LOG", "debug")
    monkeypatch.setenv("LT_MAX_DEPTH", "12")
    settings = Settings()
    assert settings.LOG == "DEBUG"
    assert settings.log_level == logging.DEBUG
    assert settings.MAX_DEPTH == 12


def test_settings_reject_unknown_level(monkeypatch):
    monkeypatch.setenv("LT_LOG", "chatty")
    with pytest.raises(ValueError):
        Settings()


def test_logger_writes_to_stderr(capsys):
    shared = logging.getLogger(Config.APP_NAME)
    saved_handlers, saved_level = list(shared.handlers), shared.level
    logger = setup_logging(level="info", log_to_file=False)
    try:
        logger.info("hello from the test")
        captured = capsys.readouterr()
    finally:
        shared.handlers[:] = saved_handlers
        shared.setLevel(saved_level)
    assert "hello from the test" in captured.err
    assert captured.out == ""
