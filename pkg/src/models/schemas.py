from typing import Any, Dict, List, Optional, Tuple
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TreeTopology:
    """Complete binary tree, nodes 1..num_nodes in heap order (children of t: 2t, 2t+1)"""
    depth: int
    num_nodes: int
    parents: np.ndarray      # parents[t] for t >= 1; parents[1] == 0, index 0 unused
    node_depths: np.ndarray  # distance from the root, index 0 unused

    @property
    def num_branching(self) -> int:
        return 2 ** self.depth - 1

    @property
    def branching_nodes(self) -> range:
        return range(1, self.num_branching + 1)

    @property
    def leaves(self) -> range:
        return range(2 ** self.depth, self.num_nodes + 1)

    def is_leaf(self, t: int) -> bool:
        return t >= 2 ** self.depth

    def parent(self, t: int) -> Optional[int]:
        return None if t == 1 else t // 2

    def children(self, t: int) -> Tuple[int, int]:
        return 2 * t, 2 * t + 1


@dataclass(frozen=True)
class RewardMatrix:
    """Rewards q (n x |T|) and the minimizing (ancestor, sign) per entry.

    ``argmin_node[i, c]`` is the ancestor id attaining the min for node c+1 (0 for the
    root column) and ``argmin_sign[i, c]`` is +1 for an s term, -1 for a -s term.
    """
    q: np.ndarray
    argmin_node: np.ndarray
    argmin_sign: np.ndarray

    @property
    def num_points(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class TreeSolution:
    """Minimizer of the relaxed traversal-and-pruning program plus backward bookkeeping"""
    z: np.ndarray                    # n x |T|
    a: np.ndarray                    # |T|
    shifted: np.ndarray              # q + 1/2, kept for the backward pass
    groups: List[Tuple[int, ...]]    # pooled node ids, each sorted
    supports: List[np.ndarray]       # per group, k* x 2 array of (point, node id)
    group_values: List[float]        # a_G per group
    clipped: List[bool]              # a_G hit the [0, 1] box
    node_group: np.ndarray           # group index per node (index 0 unused)
    lam: float
    num_merges: int

    @property
    def k_star(self) -> List[int]:
        return [len(s) for s in self.supports]

    def group_of(self, t: int) -> Tuple[int, ...]:
        return self.groups[int(self.node_group[t])]


@dataclass
class SplitParams:
    """One row per branching node: s_t(x) = act(w_t . x) + b_t"""
    weights: np.ndarray              # |T_B| x d
    bias: np.ndarray                 # |T_B|
    activation: str = "identity"


@dataclass
class PredictorParams:
    """f_phi layers; the last layer is linear, hidden layers use ELU + dropout"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    dropout: float = 0.0
    use_features: bool = True

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]


@dataclass
class ModelParams:
    split: SplitParams
    predictor: PredictorParams

    def flat(self) -> Dict[str, np.ndarray]:
        """Named views of every trainable array (shared memory, not copies)"""
        arrays = {"split.weights": self.split.weights, "split.bias": self.split.bias}
        for idx, (w, b) in enumerate(zip(self.predictor.weights, self.predictor.biases)):
            arrays[f"predictor.weights.{idx}"] = w
            arrays[f"predictor.biases.{idx}"] = b
        return arrays

    def copy(self) -> "ModelParams":
        return ModelParams(
            split=SplitParams(self.split.weights.copy(), self.split.bias.copy(), self.split.activation),
            predictor=PredictorParams(
                [w.copy() for w in self.predictor.weights],
                [b.copy() for b in self.predictor.biases],
                self.predictor.dropout,
                self.predictor.use_features,
            ),
        )


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    kind: str  # "numeric" or "categorical"


@dataclass
class PreprocessingStats:
    """Per-column z-score statistics and categorical ordinal maps, fitted on train"""
    columns: List[str]
    mean: np.ndarray
    std: np.ndarray
    categories: Dict[str, List[str]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "columns": list(self.columns),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "categories": {k: list(v) for k, v in self.categories.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreprocessingStats":
        return cls(
            columns=list(data["columns"]),
            mean=np.asarray(data["mean"], dtype=float),
            std=np.asarray(data["std"], dtype=float),
            categories={k: list(v) for k, v in data.get("categories", {}).items()},
        )


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    columns: List[ColumnInfo]
    target_name: str = "target"
    categories: Dict[str, List[str]] = field(default_factory=dict)
    stats: Optional[PreprocessingStats] = None

    @property
    def num_points(self) -> int:
        return self.X.shape[0]

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.X[index], self.y[index], list(self.columns), self.target_name,
                       dict(self.categories), self.stats)


@dataclass
class DatasetSplits:
    train: Dataset
    val: Dataset
    test: Dataset
    indices: Dict[str, np.ndarray]
    stats: PreprocessingStats
    warnings: List[str] = field(default_factory=list)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    active_node_fraction: float
    mean_a: float
    wall_ms: float

    def deterministic_view(self) -> Tuple[int, float, float, float, float, float]:
        """Everything except wall-clock time"""
        return (self.epoch, self.train_loss, self.val_loss, self.lr, self.active_node_fraction, self.mean_a)


@dataclass
class TrainedModel:
    depth: int
    params: ModelParams
    a_frozen: np.ndarray
    stats: Optional[PreprocessingStats]
    history: List[EpochRecord]
    best_epoch: int
    best_val_loss: float
    config: Dict[str, Any] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)
