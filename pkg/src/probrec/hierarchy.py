"""Summation hierarchies: the aggregation matrix ``A`` and the summing matrix ``S = [A; I]``.

Variables are always ordered upper block first, then bottom block, i.e.
``y = [u; b]`` with ``u = A @ b`` for a coherent point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllZeroRow, DimensionMismatch, EmptyMatrix, InvalidParameter, LabelCountMismatch

__all__ = ["Hierarchy", "build_hierarchy", "aggregate", "is_coherent", "load_hierarchy"]


@dataclass(frozen=True)
class Hierarchy:
    """Validated aggregation structure.

    Attributes
    ----------
    A : np.ndarray
        (n - m, m) non-negative integer aggregation matrix (read-only).
    labels : tuple of str
        n variable names, upper block first.
    """

    A: np.ndarray
    labels: tuple[str, ...]
    _S: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        S = np.vstack([self.A, np.eye(self.m, dtype=self.A.dtype)])
        S.setflags(write=False)
        object.__setattr__(self, "_S", S)

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[0] + self.A.shape[1]

    @property
    def n_upper(self) -> int:
        return self.A.shape[0]

    @property
    def S(self) -> np.ndarray:
        return self._S

    @property
    def labels_upper(self) -> tuple[str, ...]:
        return self.labels[: self.n_upper]

    @property
    def labels_bottom(self) -> tuple[str, ...]:
        return self.labels[self.n_upper :]

    def to_json(self) -> dict:
        return {
            "labels_upper": list(self.labels_upper),
            "labels_bottom": list(self.labels_bottom),
            "A": self.A.tolist(),
        }

    def __eq__(self, other):
        if not isinstance(other, Hierarchy):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.A, other.A)

    def __hash__(self):
        return hash((self.labels, self.A.tobytes(), self.A.shape))


def build_hierarchy(A, labels: Sequence[str] | None = None) -> Hierarchy:
    """Validate an aggregation matrix and wrap it as a :class:`Hierarchy`.

    ``A`` must be a non-empty 2-D array of non-negative integers with no all-zero
    row. When ``labels`` is omitted, names ``U1..`` and ``B1..`` are generated.
    """
    arr = np.asarray(A)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.size == 0:
        raise EmptyMatrix("aggregation matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(arr.astype(float))):
        raise InvalidParameter("aggregation matrix has non-finite entries")
    as_int = np.rint(arr.astype(float)).astype(np.int64)
    if not np.array_equal(as_int, arr.astype(float)) or np.any(as_int < 0):
        raise InvalidParameter("aggregation matrix entries must be non-negative integers")
    if np.any(~as_int.any(axis=1)):
        rows = np.flatnonzero(~as_int.any(axis=1)).tolist()
        raise AllZeroRow(f"aggregation matrix rows {rows} are all zero")

    n_up, m = as_int.shape
    if labels is None:
        labels = [f"U{i + 1}" for i in range(n_up)] + [f"B{j + 1}" for j in range(m)]
    labels = tuple(str(s) for s in labels)
    if len(labels) != n_up + m:
        raise LabelCountMismatch(f"expected {n_up + m} labels, got {len(labels)}")
    if len(set(labels)) != len(labels):
        raise InvalidParameter("labels must be unique")

    as_int.setflags(write=False)
    return Hierarchy(A=as_int, labels=labels)


def aggregate(h: Hierarchy, b) -> np.ndarray:
    """Return ``A @ b``. Works on a single bottom vector or on rows of an (N, m) array."""
    b = np.asarray(b)
    if b.shape[-1] != h.m:
        raise DimensionMismatch(f"bottom vector has length {b.shape[-1]}, expected {h.m}")
    return b @ h.A.T


def is_coherent(h: Hierarchy, y, tol: float = 0.0) -> bool:
    y = np.asarray(y)
    if y.shape != (h.n,):
        raise DimensionMismatch(f"point has shape {y.shape}, expected ({h.n},)")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    u, b = y[: h.n_upper], y[h.n_upper :]
    return bool(np.max(np.abs(u - aggregate(h, b))) <= tol)


def rows_coherent(h: Hierarchy, Y, tol: float = 0.0) -> np.ndarray:
    """Vectorised :func:`is_coherent` over the rows of an (N, n) array."""
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[1] != h.n:
        raise DimensionMismatch(f"expected (N, {h.n}) array, got {Y.shape}")
    gap = Y[:, : h.n_upper] - aggregate(h, Y[:, h.n_upper :])
    return np.max(np.abs(gap), axis=1) <= tol


def hierarchy_from_json(obj: dict) -> Hierarchy:
    try:
        labels = list(obj["labels_upper"]) + list(obj["labels_bottom"])
        A = obj["A"]
    except KeyError as exc:
        raise ValueError(f"hierarchy descriptor is missing key {exc}") from None
    return build_hierarchy(A, labels)


def load_hierarchy(path: str | Path) -> Hierarchy:
    with open(path, encoding="utf-8") as fh:
        return hierarchy_from_json(json.load(fh))
