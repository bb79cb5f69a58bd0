from typing import Dict, Iterator, Sequence, Tuple

import numpy as np

from src.core.errors import ArgumentError


def as_matrix(values, name: str, columns: int = None) -> np.ndarray:
    """
    Coerce input to a 2-D float array

    Args:
        values: Array-like input
        name: Argument name used in error messages
        columns: Expected column count, if fixed

    Returns:
        float64 ndarray of shape (n, m)
    """
    array = np.asarray(values, dtype=float)
    if array.ndim != 2:
        raise ArgumentError(f"{name} must be a 2-D matrix, got shape {array.shape}", code="argument.shape")
    if columns is not None and array.shape[1] != columns:
        raise ArgumentError(
            f"{name} must have {columns} columns, got {array.shape[1]}",
            code="argument.shape",
        )
    return array


def as_vector(values, name: str, length: int = None) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim != 1:
        raise ArgumentError(f"{name} must be a vector, got shape {array.shape}", code="argument.shape")
    if length is not None and array.shape[0] != length:
        raise ArgumentError(f"{name} must have length {length}, got {array.shape[0]}", code="argument.shape")
    return array


def spawn_generators(seed: int, names: Sequence[str]) -> Dict[str, np.random.Generator]:
    """Independent, reproducible generators for the named consumers of one run seed"""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def chunk_ranges(total: int, size: int) -> Iterator[Tuple[int, int]]:
    """Consecutive [start, stop) windows covering range(total)"""
    for start in range(0, total, max(size, 1)):
        yield start, min(start + size, total)
