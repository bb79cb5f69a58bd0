"""
JSON model checkpoints (format version 1).
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from src.core.errors import IngestionError
from src.core.logger import logger
from src.models.reports import EpochMetrics
from src.models.schemas import (
    EpochRecord,
    ModelParams,
    PredictorParams,
    PreprocessingStats,
    SplitParams,
    TrainedModel,
)

FORMAT_VERSION = 1


class CheckpointDocument(BaseModel):
    format_version: int
    depth: int
    split_weights: List[List[float]]
    split_bias: List[float]
    split_activation: str
    predictor_weights: List[List[List[float]]]
    predictor_biases: List[List[float]]
    dropout: float
    use_features: bool
    a_frozen: List[float]
    stats: Optional[Dict[str, Any]] = None
    history: List[EpochMetrics] = []
    best_epoch: int
    best_val_loss: float
    config: Dict[str, Any] = {}
    metadata: Dict[str, Any] = {}


def to_document(model: TrainedModel) -> CheckpointDocument:
    params = model.params
    return CheckpointDocument(
        format_version=FORMAT_VERSION,
        depth=model.depth,
        split_weights=params.split.weights.tolist(),
        split_bias=params.split.bias.tolist(),
        split_activation=params.split.activation,
        predictor_weights=[w.tolist() for w in params.predictor.weights],
        predictor_biases=[b.tolist() for b in params.predictor.biases],
        dropout=params.predictor.dropout,
        use_features=params.predictor.use_features,
        a_frozen=np.asarray(model.a_frozen).tolist(),
        stats=model.stats.to_dict() if model.stats is not None else None,
        history=[EpochMetrics(**record.__dict__) for record in model.history],
        best_epoch=model.best_epoch,
        best_val_loss=model.best_val_loss,
        config=model.config,
        metadata=model.metadata,
    )


def from_document(doc: CheckpointDocument) -> TrainedModel:
    num_features = len(doc.split_weights[0]) if doc.split_weights else 0
    params = ModelParams(
        split=SplitParams(
            weights=np.asarray(doc.split_weights, dtype=float).reshape(len(doc.split_weights), num_features),
            bias=np.asarray(doc.split_bias, dtype=float),
            activation=doc.split_activation,
        ),
        predictor=PredictorParams(
            weights=[np.asarray(w, dtype=float) for w in doc.predictor_weights],
            biases=[np.asarray(b, dtype=float) for b in doc.predictor_biases],
            dropout=doc.dropout,
            use_features=doc.use_features,
        ),
    )
    return TrainedModel(
        depth=doc.depth,
        params=params,
        a_frozen=np.asarray(doc.a_frozen, dtype=float),
        stats=PreprocessingStats.from_dict(doc.stats) if doc.stats is not None else None,
        history=[EpochRecord(**record.model_dump()) for record in doc.history],
        best_epoch=doc.best_epoch,
        best_val_loss=doc.best_val_loss,
        config=dict(doc.config),
        metadata=dict(doc.metadata),
    )


def save_checkpoint(model: TrainedModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_document(model).model_dump_json(), encoding="utf-8")
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"checkpoint not found: {path}", code="data.checkpoint", path=str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        if raw.get("format_version") != FORMAT_VERSION:
            raise IngestionError(
                f"unsupported checkpoint format {raw.get('format_version')!r}",
                code="data.checkpoint",
                path=str(path),
            )
        doc = CheckpointDocument.model_validate(raw)
    except (json.JSONDecodeError, ValidationError, AttributeError) as e:
        raise IngestionError(f"malformed checkpoint {path}: {e}", code="data.checkpoint", path=str(path)) from e
    return from_document(doc)
