"""Sparse binary evaluation matrices and their mask diagnostics.

The central record is a J-system by I-item grid in which only some
(system, item) pairs were ever evaluated.  Observed pairs store aggregated
binary outcomes as (successes, trials); absent pairs mean "never tested",
not "zero successes".
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

CSV_HEADER = ("system", "item", "successes", "trials")


class MatrixError(ValueError):
    """Invalid evaluation matrix contents or malformed matrix CSV."""


@dataclass(frozen=True)
class ResponseMatrix:
    """Sparse evaluation record.

    cells maps (system index, item index) -> (successes, trials) for
    observed pairs only; presence of a key is the observation mask.
    Instances are immutable after construction: treat `cells` as read-only.
    """

    n_systems: int
    n_items: int
    cells: Mapping[tuple[int, int], tuple[int, int]]
    system_labels: tuple[str, ...]
    item_labels: tuple[str, ...]

    def __post_init__(self):
        if self.n_systems < 2 or self.n_items < 2:
            raise MatrixError(
                f"matrix must be at least 2x2, got {self.n_systems}x{self.n_items}"
            )
        if len(self.system_labels) != self.n_systems:
            raise MatrixError("system_labels length does not match n_systems")
        if len(self.item_labels) != self.n_items:
            raise MatrixError("item_labels length does not match n_items")
        if len(set(self.system_labels)) != self.n_systems:
            raise MatrixError("system labels must be unique")
        if len(set(self.item_labels)) != self.n_items:
            raise MatrixError("item labels must be unique")
        for (j, i), (s, t) in self.cells.items():
            if not (0 <= j < self.n_systems and 0 <= i < self.n_items):
                raise MatrixError(f"cell index ({j}, {i}) out of range")
            if t < 1:
                raise MatrixError(f"cell ({j}, {i}): trials must be >= 1, got {t}")
            if not (0 <= s <= t):
                raise MatrixError(
                    f"cell ({j}, {i}): successes {s} outside [0, trials={t}]"
                )

    def observed_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Cell data as parallel arrays (system idx, item idx, successes,
        trials), sorted by (system, item) for reproducible summation order."""
        keys = sorted(self.cells)
        jj = np.array([k[0] for k in keys], dtype=np.intp)
        ii = np.array([k[1] for k in keys], dtype=np.intp)
        ss = np.array([self.cells[k][0] for k in keys], dtype=float)
        tt = np.array([self.cells[k][1] for k in keys], dtype=float)
        return jj, ii, ss, tt

    def items_per_system(self) -> np.ndarray:
        counts = np.zeros(self.n_systems, dtype=int)
        for j, _ in self.cells:
            counts[j] += 1
        return counts

    def systems_per_item(self) -> np.ndarray:
        counts = np.zeros(self.n_items, dtype=int)
        for _, i in self.cells:
            counts[i] += 1
        return counts


@dataclass(frozen=True)
class MaskDiagnostics:
    """Observation-mask summary: density, per-side minima, connectivity."""

    coverage: float
    sparsity: float
    min_items_per_system: int
    min_systems_per_item: int
    bipartite_connected: bool


def coverage(matrix: ResponseMatrix) -> float:
    """Fraction of (system, item) pairs that were observed, in [0, 1]."""
    return len(matrix.cells) / (matrix.n_systems * matrix.n_items)


def difficulty_gap(items) -> float:
    """Range of item difficulties: max b - min b, always >= 0.

    Accepts a sequence of difficulty values or any object with a `b`
    attribute (e.g. an ItemParameterSet).
    """
    b = np.asarray(getattr(items, "b", items), dtype=float)
    if b.size == 0:
        raise MatrixError("difficulty gap of an empty item set is undefined")
    return float(b.max() - b.min())


def estimate_difficulty_heterogeneity(matrix: ResponseMatrix) -> float:
    """Coefficient of variation of per-item pooled success rates.

    Pooled rate for an item = total successes / total trials across the
    systems observed on it.  Uses the population standard deviation.
    """
    succ = np.zeros(matrix.n_items)
    trials = np.zeros(matrix.n_items)
    for (_, i), (s, t) in matrix.cells.items():
        succ[i] += s
        trials[i] += t
    if np.any(trials == 0):
        empty = int(np.flatnonzero(trials == 0)[0])
        raise MatrixError(
            f"item {matrix.item_labels[empty]!r} has no observed cells"
        )
    rates = succ / trials
    mean = rates.mean()
    if mean == 0.0:
        raise MatrixError("all success rates are zero; heterogeneity undefined")
    return float(rates.std() / mean)


def bipartite_connected(
    n_systems: int, n_items: int, pairs: Iterable[tuple[int, int]]
) -> bool:
    """Whether the bipartite graph (systems, items, edges = observed pairs)
    is connected over all n_systems + n_items vertices."""
    adj_sys: list[list[int]] = [[] for _ in range(n_systems)]
    adj_item: list[list[int]] = [[] for _ in range(n_items)]
    n_edges = 0
    for j, i in pairs:
        adj_sys[j].append(i)
        adj_item[i].append(j)
        n_edges += 1
    if n_edges == 0:
        return False
    seen_sys = [False] * n_systems
    seen_item = [False] * n_items
    queue: deque[tuple[str, int]] = deque([("s", 0)])
    seen_sys[0] = True
    while queue:
        side, v = queue.popleft()
        if side == "s":
            for i in adj_sys[v]:
                if not seen_item[i]:
                    seen_item[i] = True
                    queue.append(("i", i))
        else:
            for j in adj_item[v]:
                if not seen_sys[j]:
                    seen_sys[j] = True
                    queue.append(("s", j))
    return all(seen_sys) and all(seen_item)


def diagnose_mask(matrix: ResponseMatrix) -> MaskDiagnostics:
    """Describe (never reject) the observation mask of a matrix."""
    cov = coverage(matrix)
    return MaskDiagnostics(
        coverage=cov,
        sparsity=1.0 - cov,
        min_items_per_system=int(matrix.items_per_system().min()),
        min_systems_per_item=int(matrix.systems_per_item().min()),
        bipartite_connected=bipartite_connected(
            matrix.n_systems, matrix.n_items, matrix.cells.keys()
        ),
    )


def load_matrix_csv(stream: IO[str]) -> ResponseMatrix:
    """Parse a long-format matrix CSV (`system,item,successes,trials`).

    Systems and items are indexed in order of first appearance.  Pairs not
    present in the file are unobserved.  Raises MatrixError with the
    offending line number for malformed rows, duplicate pairs, or
    successes > trials.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MatrixError("empty CSV: missing header") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise MatrixError(
            f"line 1: expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
        )
    sys_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    cells: dict[tuple[int, int], tuple[int, int]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise MatrixError(f"line {lineno}: expected 4 fields, got {len(row)}")
        sys_label, item_label = row[0].strip(), row[1].strip()
        if not sys_label or not item_label:
            raise MatrixError(f"line {lineno}: empty system or item label")
        try:
            s, t = int(row[2]), int(row[3])
        except ValueError:
            raise MatrixError(
                f"line {lineno}: successes/trials must be integers, got "
                f"{row[2]!r}/{row[3]!r}"
            ) from None
        if t < 1:
            raise MatrixError(f"line {lineno}: trials must be >= 1, got {t}")
        if not (0 <= s <= t):
            raise MatrixError(
                f"line {lineno}: successes {s} outside [0, trials={t}]"
            )
        j = sys_index.setdefault(sys_label, len(sys_index))
        i = item_index.setdefault(item_label, len(item_index))
        if (j, i) in cells:
            raise MatrixError(
                f"line {lineno}: duplicate cell ({sys_label!r}, {item_label!r})"
            )
        cells[(j, i)] = (s, t)
    return ResponseMatrix(
        n_systems=len(sys_index),
        n_items=len(item_index),
        cells=cells,
        system_labels=tuple(sys_index),
        item_labels=tuple(item_index),
    )


def save_matrix_csv(matrix: ResponseMatrix, stream: IO[str]) -> None:
    """Write a matrix in the long CSV format, rows sorted by (system, item).

    Labels may not contain commas (the format is unquoted).
    """
    for label in (*matrix.system_labels, *matrix.item_labels):
        if "," in label:
            raise MatrixError(f"label {label!r} contains a comma")
    stream.write(",".join(CSV_HEADER) + "\n")
    for (j, i) in sorted(matrix.cells):
        s, t = matrix.cells[(j, i)]
        stream.write(
            f"{matrix.system_labels[j]},{matrix.item_labels[i]},{s},{t}\n"
        )
