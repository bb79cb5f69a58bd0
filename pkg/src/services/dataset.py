"""
Dataset ingestion, generators, seeded splits and train-fitted standardization.
"""
from itertools import product
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core.errors import ArgumentError, IngestionError
from src.core.logger import logger
from src.models.schemas import ColumnInfo, Dataset, DatasetSplits, PreprocessingStats
from src.utils.helpers import as_matrix

TICTACTOE_SQUARES = [
    f"{row}-{col}-square"
    for row, col in product(("top", "middle", "bottom"), ("left", "middle", "right"))
]

_LINES = [(0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6)]


# --- ingestion -------------------------------------------------------------------

def _missing_cell(frame: pd.DataFrame) -> Optional[Tuple[int, str]]:
    blank = frame.apply(lambda col: col.str.strip() == "")
    if not blank.to_numpy().any():
        return None
    row, col = np.argwhere(blank.to_numpy())[0]
    return int(row) + 1, str(frame.columns[col])


def _encode_column(
    values: pd.Series, kind: str, known: Optional[Sequence[str]] = None
) -> Tuple[np.ndarray, str, Optional[List[str]]]:
    """
    Numeric parse, or first-appearance ordinals; ``auto`` picks numeric when every
    cell parses. With ``known`` levels the column is categorical over exactly those.
    """
    if known is not None:
        levels = [str(v) for v in known]
        codes = pd.Categorical(values.str.strip(), categories=levels).codes
        if (codes < 0).any():
            row = int(np.flatnonzero(codes < 0)[0])
            raise IngestionError(
                f"unknown category '{values.iloc[row]}' in row {row + 1}, column '{values.name}'",
                row=row + 1,
                column=str(values.name),
            )
        return codes.astype(float), "categorical", levels
    if kind in ("numeric", "auto"):
        parsed = pd.to_numeric(values.str.strip(), errors="coerce")
        bad = parsed.isna().to_numpy()
        if not bad.any():
            return parsed.to_numpy(dtype=float), "numeric", None
        if kind == "numeric":
            row = int(np.flatnonzero(bad)[0])
            raise IngestionError(
                f"cannot parse '{values.iloc[row]}' as a number in row {row + 1}, column '{values.name}'",
                row=row + 1,
                column=str(values.name),
            )
    codes, uniques = pd.factorize(values.str.strip(), sort=False)
    return codes.astype(float), "categorical", [str(u) for u in uniques]


def _frame_to_dataset(
    frame: pd.DataFrame,
    target: Optional[str],
    kinds: Mapping[str, str],
    categories: Optional[Mapping[str, Sequence[str]]] = None,
) -> Dataset:
    missing = _missing_cell(frame)
    if missing is not None:
        row, column = missing
        raise IngestionError(f"missing value in row {row}, column '{column}'", row=row, column=column)

    unknown = [name for name in list(kinds) + ([target] if target else []) if name not in frame.columns]
    if unknown:
        raise IngestionError(f"columns {unknown} not found in header", columns=unknown)

    known = dict(categories or {})
    features, infos = [], []
    encoded: Dict[str, List[str]] = {}
    y = np.zeros(len(frame))
    for name in frame.columns:
        values, kind, levels = _encode_column(frame[name], kinds.get(name, "auto"), known.get(str(name)))
        if levels is not None:
            encoded[str(name)] = levels
        if name == target:
            y = values
            continue
        features.append(values)
        infos.append(ColumnInfo(name=str(name), kind=kind))
    X = np.column_stack(features) if features else np.zeros((len(frame), 0))
    return Dataset(X=X, y=y, columns=infos, target_name=target or "target", categories=encoded)


def load_csv(
    path: Union[str, Path],
    target: Optional[str] = None,
    kinds: Optional[Mapping[str, str]] = None,
    categories: Optional[Mapping[str, Sequence[str]]] = None,
) -> Dataset:
    """
    Load a headed UTF-8 CSV

    Args:
        path: CSV file
        target: Target column name; None keeps every column as a feature
        kinds: Column name -> "numeric" | "categorical"; unlisted columns are numeric
            when every cell parses, categorical otherwise
        categories: Ordinal maps fitted earlier, reused at inference time

    Returns:
        Dataset with categorical columns mapped to ordinals in first-appearance order
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"data file not found: {path}", path=str(path))
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise IngestionError(f"cannot read {path}: {e}", path=str(path)) from e
    if frame.shape[0] == 0:
        raise IngestionError(f"{path} has a header but no rows", path=str(path))
    # short rows come back as NaN rather than ""
    frame = frame.fillna("")
    dataset = _frame_to_dataset(frame, target, kinds or {}, categories)
    logger.info(f"Loaded {path.name}: {dataset.num_points} rows, {dataset.X.shape[1]} features")
    return dataset


# --- generators ------------------------------------------------------------------

def _winner(board: Tuple[str, ...], player: str) -> bool:
    return any(all(board[i] == player for i in line) for line in _LINES)


def tictactoe_endgames() -> Dataset:
    """
    Every legal terminal board of tic-tac-toe with x moving first

    The target is positive exactly when x has three in a row.
    """
    terminal = set()
    stack = [(("b",) * 9, "x")]
    seen = set()
    while stack:
        board, player = stack.pop()
        if board in seen:
            continue
        seen.add(board)
        if _winner(board, "x") or _winner(board, "o") or "b" not in board:
            terminal.add(board)
            continue
        following = "o" if player == "x" else "x"
        for cell in range(9):
            if board[cell] == "b":
                stack.append((board[:cell] + (player,) + board[cell + 1:], following))

    rows = sorted(terminal)
    frame = pd.DataFrame(rows, columns=TICTACTOE_SQUARES)
    dataset = _frame_to_dataset(frame, None, {name: "categorical" for name in TICTACTOE_SQUARES})
    dataset.y = np.array([1.0 if _winner(board, "x") else 0.0 for board in rows])
    dataset.target_name = "class"
    return dataset


def synthetic_classification(n: int = 512, d: int = 4, seed: int = 0) -> Dataset:
    """Gaussian features, y = 1[x_1 > 0]"""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (X[:, 0] > 0).astype(float)
    return Dataset(X=X, y=y, columns=[ColumnInfo(f"x{j + 1}", "numeric") for j in range(d)])


def synthetic_regression(n: int = 1024, d: int = 4, seed: int = 0, noise: float = 0.1) -> Dataset:
    """Piecewise target with axis-aligned regimes plus Gaussian noise"""
    if d < 3:
        raise ArgumentError("synthetic regression needs d >= 3", code="argument.features")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.where(X[:, 0] > 0, 2.0 + X[:, 1], -1.0 + 0.5 * X[:, 2]) + noise * rng.standard_normal(n)
    return Dataset(X=X, y=y, columns=[ColumnInfo(f"x{j + 1}", "numeric") for j in range(d)])


# --- splits and standardization --------------------------------------------------

def fit_stats(dataset: Dataset) -> PreprocessingStats:
    """Column means and population std of ``dataset``; constant columns get std 1"""
    X = as_matrix(dataset.X, "X")
    std = X.std(axis=0)
    return PreprocessingStats(
        columns=[c.name for c in dataset.columns],
        mean=X.mean(axis=0),
        std=np.where(std > 0, std, 1.0),
        categories={k: list(v) for k, v in dataset.categories.items()},
    )


def apply_stats(X: np.ndarray, stats: PreprocessingStats) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[1] != stats.mean.shape[0]:
        raise ArgumentError(
            f"X has {X.shape[1]} columns, stats were fitted on {stats.mean.shape[0]}",
            code="argument.features",
        )
    return (X - stats.mean) / stats.std


def _split_sizes(count: int, fractions: Sequence[float]) -> Tuple[int, int]:
    n_train = int(round(fractions[0] * count))
    n_val = min(int(round(fractions[1] * count)), count - n_train)
    return n_train, n_val


def _stratified_indices(labels: np.ndarray, fractions, rng) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    parts: List[List[np.ndarray]] = [[], [], []]
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        n_train, n_val = _split_sizes(members.shape[0], fractions)
        parts[0].append(members[:n_train])
        parts[1].append(members[n_train:n_train + n_val])
        parts[2].append(members[n_train + n_val:])
    return tuple(rng.permutation(np.concatenate(p)) for p in parts)


def split_dataset(
    dataset: Dataset,
    fractions: Sequence[float] = (0.6, 0.2, 0.2),
    stratify: bool = False,
    seed: int = 0,
    labels: Optional[np.ndarray] = None,
) -> DatasetSplits:
    """
    Seeded train/val/test split with standardization fitted on train only

    Args:
        dataset: Unstandardized dataset
        fractions: Train, val, test shares summing to 1
        stratify: Preserve per-class proportions (falls back when a class has < 3 samples)
        seed: Split seed
        labels: Class labels used for stratification; defaults to ``dataset.y``
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ArgumentError(f"fractions must be three non-negative shares summing to 1, got {fractions}",
                            code="argument.fractions")
    n = dataset.num_points
    rng = np.random.default_rng(seed)
    warnings: List[str] = []
    labels = np.asarray(dataset.y if labels is None else labels)

    if stratify:
        if labels.ndim != 1:
            raise ArgumentError("stratification needs a label vector", code="argument.labels")
        _, class_counts = np.unique(labels, return_counts=True)
        if class_counts.min() < 3:
            message = "a class has fewer than 3 samples; falling back to an unstratified split"
            logger.warning(message)
            warnings.append(message)
            stratify = False

    if stratify:
        train_idx, val_idx, test_idx = _stratified_indices(labels, fractions, rng)
    else:
        perm = rng.permutation(n)
        n_train, n_val = _split_sizes(n, fractions)
        train_idx, val_idx, test_idx = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]

    raw_train = dataset.subset(train_idx)
    stats = fit_stats(raw_train)
    splits = {}
    for name, index in (("train", train_idx), ("val", val_idx), ("test", test_idx)):
        part = dataset.subset(index)
        part.X = apply_stats(part.X, stats)
        part.stats = stats
        splits[name] = part
    logger.info(f"Split {n} rows into {len(train_idx)}/{len(val_idx)}/{len(test_idx)}")
    return DatasetSplits(
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        indices={"train": train_idx, "val": val_idx, "test": test_idx},
        stats=stats,
        warnings=warnings,
    )


def load_source(
    source: str,
    target: Optional[str] = None,
    seed: int = 0,
    categories: Optional[Mapping[str, Sequence[str]]] = None,
    require_target: bool = False,
) -> Dataset:
    """
    Resolve a data source name

    ``synthetic:reg`` and ``synthetic:cls`` draw the seeded generators,
    ``tictactoe`` enumerates the endgame boards, anything else is a CSV path.
    With ``require_target`` a CSV must name its label column.
    """
    if source == "synthetic:reg":
        return synthetic_regression(seed=seed)
    if source == "synthetic:cls":
        return synthetic_classification(seed=seed)
    if source == "tictactoe":
        return tictactoe_endgames()
    if require_target and target is None:
        raise ArgumentError(
            f"a target column is required to train on {source}", code="argument.target", source=source
        )
    return load_csv(source, target=target, categories=categories)
