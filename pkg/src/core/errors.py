"""
Exception hierarchy. Every error carries a machine-readable code that the CLI
reports verbatim in its error JSON.
"""
from typing import Any, Dict, Optional

from pydantic import ValidationError


class LatentTreeError(Exception):
    """Base error with a stable code and structured details"""

    code: str = "error"

    def __init__(self, message: str, code: Optional[str] = None, **details: Any):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class ConfigError(LatentTreeError, ValueError):
    code = "config"


class ArgumentError(LatentTreeError, ValueError):
    code = "argument"


class NumericError(LatentTreeError, ArithmeticError):
    code = "numeric"


class SolverInternalError(LatentTreeError, RuntimeError):
    code = "solver.internal"


class UsageError(LatentTreeError, RuntimeError):
    code = "usage"


class OracleFailure(LatentTreeError, RuntimeError):
    code = "oracle.failure"


class IngestionError(LatentTreeError, ValueError):
    code = "data.ingestion"


class TrainingError(LatentTreeError, RuntimeError):
    code = "training.diverged"


class UndefinedMetricError(LatentTreeError, ValueError):
    code = "metric.undefined"


def config_error_from(exc: ValidationError, aliases: Optional[Dict[str, str]] = None) -> ConfigError:
    """Translate the first pydantic validation failure into a ConfigError"""
    aliases = aliases or {}
    first = exc.errors()[0]
    parts = [aliases.get(str(part), str(part)) for part in first.get("loc", ())]
    loc = ".".join(parts) or "value"
    return ConfigError(
        f"invalid configuration for '{loc}': {first.get('msg', 'invalid value')}",
        code=f"config.{loc}",
        field=loc,
        input=repr(first.get("input")),
    )


def nested_config_error(parent: str, error: ConfigError) -> ConfigError:
    """Prefix a nested model's ConfigError with the field that holds it"""
    loc = f"{parent}.{error.details.get('field', 'value')}"
    reason = error.message.split("': ", 1)[-1]
    return ConfigError(
        f"invalid configuration for '{loc}': {reason}",
        code=f"config.{loc}",
        field=loc,
        input=error.details.get("input"),
    )
