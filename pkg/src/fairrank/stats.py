"""Rankings, rank correlation, and the failure-surface regressions.

Rankings use the average-rank convention for exact ties, so rank sums are
always J(J+1)/2 and Spearman correlation is the plain Pearson correlation
of the two rank vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .matrix import ResponseMatrix

# Cells whose error is at or below this floor are excluded from the
# log-log power-law fit (log of ~zero error is unusable) but still count
# toward its reported R^2.
POWER_LAW_ERROR_FLOOR = 1e-4


class RankingError(ValueError):
    """Degenerate ranking input (constant ranks, empty system, ...)."""


@dataclass(frozen=True)
class Ranking:
    """Per-system scores plus 1-based descending ranks (1 = best)."""

    scores: np.ndarray
    ranks: np.ndarray


@dataclass(frozen=True)
class InteractionFit:
    """Centered OLS fit error ~ 1 + S_c + D_c + S_c*D_c."""

    gamma: np.ndarray
    t_values: np.ndarray
    r_squared: float

    def to_dict(self) -> dict:
        return {
            "gamma": [float(g) for g in self.gamma],
            "t_values": [float(t) for t in self.t_values],
            "r_squared": float(self.r_squared),
        }


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares fit of error = alpha * (S*D)^beta in log space."""

    alpha: float
    beta: float
    r_squared: float

    def to_dict(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "r_squared": float(self.r_squared),
        }


def rank_descending(scores) -> Ranking:
    """Rank systems by descending score; exact ties get average ranks."""
    scores = np.asarray(scores, dtype=float)
    ranks = sstats.rankdata(-scores, method="average")
    return Ranking(scores=scores, ranks=ranks)


def simple_average(matrix: ResponseMatrix) -> Ranking:
    """Mean of a system's per-item success rates over its observed items.

    This is the unweighted mean of rates, not the pooled count ratio, so
    items with different trial counts carry equal weight.
    """
    totals = np.zeros(matrix.n_systems)
    counts = np.zeros(matrix.n_systems)
    for (j, _), (s, t) in matrix.cells.items():
        totals[j] += s / t
        counts[j] += 1
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise RankingError(
            f"system {matrix.system_labels[empty]!r} has no observed cells"
        )
    return rank_descending(totals / counts)


def _as_ranks(ranking) -> np.ndarray:
    if isinstance(ranking, Ranking):
        return ranking.ranks
    return np.asarray(ranking, dtype=float)


def spearman_rho(ranking_a, ranking_b) -> float:
    """Pearson correlation of two rank vectors, in [-1, 1]."""
    ra, rb = _as_ranks(ranking_a), _as_ranks(ranking_b)
    if ra.shape != rb.shape or ra.size < 2:
        raise RankingError("rankings must have equal length >= 2")
    if np.ptp(ra) == 0 or np.ptp(rb) == 0:
        raise RankingError("correlation undefined for a constant rank vector")
    return float(np.corrcoef(ra, rb)[0, 1])


def rank_displacement(ranking_est, ranking_true, system: int) -> float:
    """Estimated rank minus true rank for one system.

    Positive = the estimate demoted (penalized) the system; negative = the
    estimate inflated it toward the top.
    """
    re, rt = _as_ranks(ranking_est), _as_ranks(ranking_true)
    if not 0 <= system < re.size or system >= rt.size:
        raise RankingError(f"unknown system index {system}")
    return float(re[system] - rt[system])


def _unpack_cells(cells) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray(list(cells), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("cells must be (S, D, error) triples")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def ols_interaction(cells) -> InteractionFit:
    """OLS of error on centered sparsity, gap, and their interaction.

    t-values use the homoskedastic estimate sigma^2 = RSS / (n - 4);
    R^2 = 1 - RSS/TSS.
    """
    s, d, y = _unpack_cells(cells)
    n = y.size
    if len({(si, di) for si, di in zip(s, d)}) < 5:
        raise ValueError("need at least 5 distinct (S, D) design points")
    sc = s - s.mean()
    dc = d - d.mean()
    x = np.column_stack([np.ones(n), sc, dc, sc * dc])
    if np.linalg.matrix_rank(x) < 4:
        raise ValueError("singular interaction design")
    gamma, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ gamma
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    sigma2 = rss / (n - 4)
    cov = sigma2 * np.linalg.inv(x.T @ x)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = np.where(se > 0, gamma / se, np.sign(gamma) * np.inf)
    r_squared = 1.0 - rss / tss if tss > 0 else 1.0
    return InteractionFit(gamma=gamma, t_values=t_values, r_squared=r_squared)


def power_law_fit(cells) -> PowerLawFit:
    """Fit error = alpha * (S*D)^beta by least squares on log-log axes.

    Only cells with S*D > 0 and error above POWER_LAW_ERROR_FLOOR enter the
    log fit; R^2 is then scored against the raw errors of every cell with
    S*D > 0, using the fitted curve's predictions for the excluded ones.
    """
    s, d, y = _unpack_cells(cells)
    product = s * d
    scored = product > 0
    eligible = scored & (y > POWER_LAW_ERROR_FLOOR)
    if eligible.sum() < 3:
        raise ValueError(
            "need at least 3 cells with S*D > 0 and error above the floor"
        )
    lx = np.log(product[eligible])
    ly = np.log(y[eligible])
    design = np.column_stack([np.ones(lx.size), lx])
    coef, _, _, _ = np.linalg.lstsq(design, ly, rcond=None)
    alpha = float(np.exp(coef[0]))
    beta = float(coef[1])
    pred = alpha * product[scored] ** beta
    resid = y[scored] - pred
    tss = float(((y[scored] - y[scored].mean()) ** 2).sum())
    r_squared = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
    return PowerLawFit(alpha=alpha, beta=beta, r_squared=r_squared)
