"""
Output schemas. Every JSON document the CLI writes is one of these models, so the
schemas shipped with the repository are ``Model.model_json_schema()``.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, Union

from pydantic import BaseModel, Field


class ErrorReport(BaseModel):
    code: str
    message: str
    details: Dict[str, Any] = Field(default_factory=dict)


class ErrorEnvelope(BaseModel):
    error: ErrorReport


class EpochMetrics(BaseModel):
    """One line of the per-epoch metrics stream"""
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    active_node_fraction: float
    mean_a: float
    wall_ms: float


class NodeRouting(BaseModel):
    node: int
    depth: int
    a: Optional[float] = None
    share: float
    class_distribution: Optional[Dict[str, float]] = None


class TrainSummary(BaseModel):
    task: str
    depth: int
    lam: float = Field(alias="lambda")
    seed: int
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    active_node_fraction: float
    wall_ms: float
    rss_mb: Optional[float] = None
    test_mse: Optional[float] = None
    test_error: Optional[float] = None
    dendrogram_purity: Optional[float] = None
    routing: Optional[List[NodeRouting]] = None
    warnings: List[str] = Field(default_factory=list)
    checkpoint: Optional[str] = None

    model_config = {"populate_by_name": True}


class GroupDump(BaseModel):
    nodes: List[int]
    value: float
    k_star: int
    clipped: bool
    supports: List[List[int]] = Field(default_factory=list)


class SolveDump(BaseModel):
    """Debug dump of one solver call"""
    depth: int
    lam: float = Field(alias="lambda")
    n: int
    q: List[List[float]]
    a: List[float]
    z: List[List[float]]
    groups: List[GroupDump]
    supports: List[List[List[int]]]
    num_merges: int
    objective: float
    oracle_gap: Optional[float] = None

    model_config = {"populate_by_name": True}


class InferenceReport(BaseModel):
    outputs: List[List[float]]
    leaves: List[int]
    resolved: bool


class GradcheckComponent(BaseModel):
    name: str
    max_rel_err: float
    tolerance: float
    trials: int
    resampled: int
    passed: bool
    worst_coordinate: Optional[List[int]] = None


class GradcheckReport(BaseModel):
    seed: int
    trials: int
    passed: bool
    components: List[GradcheckComponent]
    warnings: List[str] = Field(default_factory=list)


class BenchRow(BaseModel):
    n: int
    D: int
    solver_ms_median: float
    oracle_ms_median: Optional[float] = None
    speedup: Optional[float] = None
    solver_peak_mib: Optional[float] = None
    oracle_peak_mib: Optional[float] = None


class GapRow(BaseModel):
    lam: float = Field(alias="lambda")
    mean_gap_a: float
    mean_gap_z: float
    max_possible_gap: float = 1.0

    model_config = {"populate_by_name": True}


# file stem under schemas/ -> model of that output
REPORT_MODELS: Dict[str, Type[BaseModel]] = {
    "error": ErrorEnvelope,
    "epoch_metrics": EpochMetrics,
    "train_summary": TrainSummary,
    "inference_report": InferenceReport,
    "solve_dump": SolveDump,
    "gradcheck_report": GradcheckReport,
    "bench_row": BenchRow,
    "gap_row": GapRow,
}


def export_schemas(out_dir: Union[str, Path]) -> List[Path]:
    """Write ``<name>.schema.json`` for every report model"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, model in REPORT_MODELS.items():
        path = out_dir / f"{name}.schema.json"
        path.write_text(json.dumps(model.model_json_schema(by_alias=True), indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written
