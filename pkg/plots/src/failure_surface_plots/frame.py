"""Sweep CSV parsing into complete rectangular grids."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

REQUIRED_COLUMNS = ("S", "D", "mechanism", "rho_avg_mean", "rho_irt_mean")


class SweepFrameError(ValueError):
    """Malformed or incomplete sweep CSV."""


@dataclass(frozen=True)
class SweepFrame:
    """One mechanism's sweep results on a complete (S, D) grid.

    Arrays are indexed [s_index, d_index] with both axes sorted ascending.
    """

    mechanism: str
    s_values: np.ndarray
    d_values: np.ndarray
    rho_avg: np.ndarray
    rho_irt: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        return self.rho_irt - self.rho_avg


def load_sweep_csv(path: str | Path) -> SweepFrame:
    """Read one sweep CSV and validate that it forms a complete grid.

    Raises SweepFrameError naming any missing (S, D) cells.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        missing_cols = [
            c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or ())
        ]
        if missing_cols:
            raise SweepFrameError(
                f"{path.name}: missing columns {', '.join(missing_cols)}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    (
                        float(row["S"]),
                        float(row["D"]),
                        row["mechanism"].strip(),
                        float(row["rho_avg_mean"]),
                        float(row["rho_irt_mean"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise SweepFrameError(f"{path.name} line {lineno}: {exc}") from None
    if not rows:
        raise SweepFrameError(f"{path.name}: no data rows")
    mechanisms = {r[2] for r in rows}
    if len(mechanisms) != 1:
        raise SweepFrameError(
            f"{path.name}: expected one mechanism, found {sorted(mechanisms)}"
        )
    mechanism = rows[0][2]
    s_values = np.array(sorted({r[0] for r in rows}))
    d_values = np.array(sorted({r[1] for r in rows}))
    rho_avg = np.full((s_values.size, d_values.size), np.nan)
    rho_irt = np.full_like(rho_avg, np.nan)
    s_index = {s: k for k, s in enumerate(s_values)}
    d_index = {d: k for k, d in enumerate(d_values)}
    for s, d, _, avg, irt in rows:
        rho_avg[s_index[s], d_index[d]] = avg
        rho_irt[s_index[s], d_index[d]] = irt
    if np.isnan(rho_avg).any():
        holes = [
            f"(S={s_values[si]:g}, D={d_values[di]:g})"
            for si, di in zip(*np.nonzero(np.isnan(rho_avg)))
        ]
        raise SweepFrameError(
            f"{path.name}: grid incomplete, missing cells: {', '.join(holes)}"
        )
    return SweepFrame(
        mechanism=mechanism,
        s_values=s_values,
        d_values=d_values,
        rho_avg=rho_avg,
        rho_irt=rho_irt,
    )
