"""Experiment orchestration: multi-seed domain runs, the sparsity/difficulty
grid sweep, sensitivity checks, the practitioner decision rule, and the CSV/
JSON result writers.

Seeds for every generated dataset derive from one master seed by stable
integer mixing, so whole runs are reproducible and cells can be computed in
any order (or in parallel) without changing the aggregates.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.special import expit

from . import generate as gen
from . import model, stats
from .matrix import ResponseMatrix, coverage, estimate_difficulty_heterogeneity
from .model import ItemParameterSet, PriorConfig

MECHANISMS = ("biased", "mcar")
_MECHANISM_IDS = {"biased": 11, "mcar": 12}
_DOMAIN_IDS = {"nlp": 1, "clinical": 2, "av": 3, "cyber": 4}
_RESPONSE_TAG = 777  # keeps response streams mechanism-independent
_SENSITIVITY_TAG = 555

DEFAULT_S_GRID = tuple(np.round(np.arange(15) * 0.05, 2))
DEFAULT_D_GRID = tuple(np.round(0.5 + np.arange(10) * 0.5, 2))
DEFAULT_COVERAGE_GRID = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_GAP_GRID = (1.0, 2.0, 3.0, 4.0)

# Verdict labels by the IRT-minus-average gap in mean rank correlation.
_VERDICTS = ((0.01, "Both correct"), (0.08, "Avg. degrades"), (0.15, "Avg. unreliable"))
_VERDICT_WORST = "Avg. misleading"

# A cell with more than this fraction of failed seeds invalidates a sweep.
FAILED_SEED_BUDGET = 0.2


class ExperimentError(RuntimeError):
    """A domain run or sweep could not produce valid results."""


def _fmt(x) -> str:
    return f"{float(x):.4f}"


@dataclass(frozen=True)
class DomainResult:
    """Per-domain reproduction: per-seed rank correlations and diagnostics."""

    name: str
    coverage: float
    difficulty_gap: float
    rho_avg: np.ndarray
    rho_irt: np.ndarray
    item_recovery: np.ndarray
    displacements: Mapping[str, Mapping[str, np.ndarray]]
    verdict: str

    @property
    def s_times_d(self) -> float:
        return (1.0 - self.coverage) * self.difficulty_gap

    @property
    def rho_avg_mean(self) -> float:
        return float(self.rho_avg.mean())

    @property
    def rho_avg_std(self) -> float:
        return float(self.rho_avg.std())

    @property
    def rho_irt_mean(self) -> float:
        return float(self.rho_irt.mean())

    @property
    def rho_irt_std(self) -> float:
        return float(self.rho_irt.std())


@dataclass(frozen=True)
class SweepResult:
    """Grid sweep output: per-seed rank correlations per mechanism/cell."""

    s_values: np.ndarray
    d_values: np.ndarray
    n_seeds: int
    rho_avg: Mapping[str, np.ndarray]  # mech -> (nS, nD, n_seeds), NaN = failed
    rho_irt: Mapping[str, np.ndarray]
    failures: tuple
    valid: bool

    def rho_avg_mean(self, mechanism: str) -> np.ndarray:
        return np.nanmean(self.rho_avg[mechanism], axis=2)

    def rho_avg_std(self, mechanism: str) -> np.ndarray:
        return np.nanstd(self.rho_avg[mechanism], axis=2)

    def rho_irt_mean(self, mechanism: str) -> np.ndarray:
        return np.nanmean(self.rho_irt[mechanism], axis=2)

    def rho_irt_std(self, mechanism: str) -> np.ndarray:
        return np.nanstd(self.rho_irt[mechanism], axis=2)

    def seeds_ok(self, mechanism: str) -> np.ndarray:
        return np.sum(~np.isnan(self.rho_avg[mechanism]), axis=2)

    def error_surface(self, mechanism: str) -> np.ndarray:
        return 1.0 - self.rho_avg_mean(mechanism)

    def delta_surface(self, mechanism: str = "biased") -> np.ndarray:
        return self.rho_irt_mean(mechanism) - self.rho_avg_mean(mechanism)


@dataclass(frozen=True)
class SweepAnalysis:
    """Regression view of a sweep: interaction fits, power law, mechanism gap."""

    rows: str
    interaction: Mapping[str, stats.InteractionFit]
    power_law: stats.PowerLawFit | None
    mean_error_high_sparsity: Mapping[str, float]
    mechanism_gap: float

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "biased": {
                "interaction": self.interaction["biased"].to_dict(),
                "power_law": (
                    self.power_law.to_dict() if self.power_law is not None else None
                ),
            },
            "mcar": {"interaction": self.interaction["mcar"].to_dict()},
            "mean_error_high_sparsity": {
                k: (None if np.isnan(v) else float(v))
                for k, v in self.mean_error_high_sparsity.items()
            },
            "mechanism_gap": (
                None if np.isnan(self.mechanism_gap) else float(self.mechanism_gap)
            ),
        }


@dataclass(frozen=True)
class SensitivityResult:
    """Coverage/gap sensitivity table rows."""

    rows: tuple  # of dicts: coverage, gap, mechanism, rho_avg_mean, rho_irt_mean, n_seeds
    valid: bool = True


@dataclass(frozen=True)
class DecisionVerdict:
    """Practitioner decision-rule output."""

    coverage: float
    heterogeneity: float
    verdict: str  # "averaging_adequate" | "use_irt"
    rationale: str


def _verdict_label(delta_rho: float) -> str:
    for threshold, label in _VERDICTS:
        if delta_rho <= threshold:
            return label
    return _VERDICT_WORST


def run_domain(
    name: str,
    n_seeds: int = 20,
    master_seed: int = 42,
    priors: PriorConfig = PriorConfig(),
) -> DomainResult:
    """Reproduce one domain: generate, rank by both methods, score vs truth."""
    config = gen.domain_config(name)
    true_ranking = stats.rank_descending(config.theta_true)
    true_item_ranking = stats.rank_descending(config.items.b)
    watch = dict(config.special_systems)
    rho_avg = np.empty(n_seeds)
    rho_irt = np.empty(n_seeds)
    recovery = np.empty(n_seeds)
    displacements = {
        key: {"avg": np.empty(n_seeds), "irt": np.empty(n_seeds)} for key in watch
    }
    for k in range(n_seeds):
        seed = gen.mix_seed(master_seed, _DOMAIN_IDS[name], k)
        matrix = gen.generate_responses(
            config.theta_true,
            config.items,
            config.mask,
            config.trials,
            seed,
            config.system_labels,
            config.item_labels,
        )
        avg_ranking = stats.simple_average(matrix)
        try:
            fitted = model.fit(matrix, priors=priors)
        except (model.FitError, model.ModelError) as exc:
            raise ExperimentError(
                f"domain {name!r}: fit failed at seed index {k}: {exc}"
            ) from exc
        irt_ranking = model.rank_by_ability(fitted)
        rho_avg[k] = stats.spearman_rho(avg_ranking, true_ranking)
        rho_irt[k] = stats.spearman_rho(irt_ranking, true_ranking)
        recovery[k] = stats.spearman_rho(
            stats.rank_descending(fitted.items.b), true_item_ranking
        )
        for key, j in watch.items():
            displacements[key]["avg"][k] = stats.rank_displacement(
                avg_ranking, true_ranking, j
            )
            displacements[key]["irt"][k] = stats.rank_displacement(
                irt_ranking, true_ranking, j
            )
    return DomainResult(
        name=name,
        coverage=config.coverage,
        difficulty_gap=float(config.items.b.max() - config.items.b.min()),
        rho_avg=rho_avg,
        rho_irt=rho_irt,
        item_recovery=recovery,
        displacements=displacements,
        verdict=_verdict_label(float(rho_irt.mean() - rho_avg.mean())),
    )


def evaluate_cell(spec: gen.SweepCellSpec, response_seed: int) -> tuple[float, float]:
    """One generated dataset under a sweep condition: rank correlation of
    the simple-average and latent-trait rankings against the truth."""
    theta, items = gen.sweep_truth(spec.gap, spec.n_systems, spec.n_items)
    true_ranking = stats.rank_descending(theta)
    if spec.mechanism == "biased":
        mask = gen.make_biased_mask(
            spec.n_systems, spec.n_items, spec.sparsity, theta, items.b,
            seed=spec.seed,
        )
    elif spec.mechanism == "mcar":
        mask = gen.make_mcar_mask(
            spec.n_systems, spec.n_items, spec.sparsity, seed=spec.seed
        )
    else:
        raise ExperimentError(f"unknown mechanism {spec.mechanism!r}")
    matrix = gen.generate_responses(theta, items, mask, spec.trials, response_seed)
    rho_avg = stats.spearman_rho(stats.simple_average(matrix), true_ranking)
    fitted = model.fit(matrix)
    rho_irt = stats.spearman_rho(model.rank_by_ability(fitted), true_ranking)
    return rho_avg, rho_irt


def _sweep_cell(args: tuple) -> tuple:
    """One (mechanism, S, D) cell: n_seeds generated datasets, both methods.

    Mask seeds mix in the mechanism; response seeds do not, so at S = 0 the
    two mechanisms see identical full-mask datasets cell for cell.
    """
    (master_seed, mechanism, si, di, s, d, n_seeds, j_n, i_n, trials) = args
    out_avg = np.full(n_seeds, np.nan)
    out_irt = np.full(n_seeds, np.nan)
    failures = []
    for rep in range(n_seeds):
        spec = gen.SweepCellSpec(
            sparsity=s,
            gap=d,
            mechanism=mechanism,
            n_systems=j_n,
            n_items=i_n,
            trials=trials,
            seed=gen.mix_seed(master_seed, _MECHANISM_IDS[mechanism], si, di, rep),
        )
        response_seed = gen.mix_seed(master_seed, _RESPONSE_TAG, si, di, rep)
        try:
            out_avg[rep], out_irt[rep] = evaluate_cell(spec, response_seed)
        except (gen.GenerationError, model.FitError, stats.RankingError) as exc:
            failures.append((mechanism, float(s), float(d), rep, str(exc)))
    return mechanism, si, di, out_avg, out_irt, failures


def run_sweep(
    s_values: Iterable[float] = DEFAULT_S_GRID,
    d_values: Iterable[float] = DEFAULT_D_GRID,
    mechanisms: Iterable[str] = MECHANISMS,
    n_seeds: int = 15,
    n_systems: int = 10,
    n_items: int = 10,
    trials: int = 100,
    master_seed: int = 42,
    jobs: int = 1,
) -> SweepResult:
    """Run the failure-surface grid for each mechanism.

    Cell-level failures are recorded, not fatal; a cell losing more than
    FAILED_SEED_BUDGET of its seeds marks the whole sweep invalid.
    """
    s_values = np.asarray(list(s_values), dtype=float)
    d_values = np.asarray(list(d_values), dtype=float)
    mechanisms = tuple(mechanisms)
    if s_values.size == 0 or d_values.size == 0:
        raise ExperimentError("sweep grids must be nonempty")
    tasks = [
        (master_seed, mech, si, di, float(s), float(d), n_seeds, n_systems, n_items, trials)
        for mech in mechanisms
        for si, s in enumerate(s_values)
        for di, d in enumerate(d_values)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_sweep_cell, tasks, chunksize=4))
    else:
        raw = [_sweep_cell(t) for t in tasks]
    raw.sort(key=lambda r: (r[0], r[1], r[2]))

    shape = (s_values.size, d_values.size, n_seeds)
    rho_avg = {m: np.full(shape, np.nan) for m in mechanisms}
    rho_irt = {m: np.full(shape, np.nan) for m in mechanisms}
    failures: list[tuple] = []
    valid = True
    for mech, si, di, cell_avg, cell_irt, cell_failures in raw:
        rho_avg[mech][si, di] = cell_avg
        rho_irt[mech][si, di] = cell_irt
        failures.extend(cell_failures)
        if np.isnan(cell_irt).mean() > FAILED_SEED_BUDGET:
            valid = False
    return SweepResult(
        s_values=s_values,
        d_values=d_values,
        n_seeds=n_seeds,
        rho_avg=rho_avg,
        rho_irt=rho_irt,
        failures=tuple(failures),
        valid=valid,
    )


def analyze_sweep(sweep: SweepResult, rows: str = "cells") -> SweepAnalysis:
    """Interaction regressions per mechanism, power law on the biased
    surface, and the high-sparsity mechanism gap.

    rows="cells" regresses the 150 per-cell mean errors; rows="seeds" uses
    every per-seed error instead.
    """
    if rows not in ("cells", "seeds"):
        raise ValueError("rows must be 'cells' or 'seeds'")

    def regression_rows(mechanism: str) -> list[tuple[float, float, float]]:
        out = []
        for si, s in enumerate(sweep.s_values):
            for di, d in enumerate(sweep.d_values):
                if rows == "cells":
                    out.append(
                        (s, d, 1.0 - float(np.nanmean(sweep.rho_avg[mechanism][si, di])))
                    )
                else:
                    for value in sweep.rho_avg[mechanism][si, di]:
                        if np.isfinite(value):
                            out.append((s, d, 1.0 - float(value)))
        return out

    interaction = {m: stats.ols_interaction(regression_rows(m)) for m in sweep.rho_avg}
    try:
        power_law = stats.power_law_fit(regression_rows("biased"))
    except ValueError:
        # A reduced grid can leave fewer than 3 cells with material error;
        # the power law is then unfittable rather than the sweep invalid.
        power_law = None
    high_s = sweep.s_values >= 0.40
    if high_s.any():
        mean_error = {
            m: float(sweep.error_surface(m)[high_s].mean()) for m in sweep.rho_avg
        }
        gap = mean_error["biased"] - mean_error["mcar"]
    else:
        mean_error = {m: float("nan") for m in sweep.rho_avg}
        gap = float("nan")
    return SweepAnalysis(
        rows=rows,
        interaction=interaction,
        power_law=power_law,
        mean_error_high_sparsity=mean_error,
        mechanism_gap=gap,
    )


def run_sensitivity(
    coverages: Iterable[float] = DEFAULT_COVERAGE_GRID,
    gaps: Iterable[float] = DEFAULT_GAP_GRID,
    n_seeds: int = 15,
    n_systems: int = 10,
    n_items: int = 10,
    trials: int = 100,
    master_seed: int = 42,
    jobs: int = 1,
) -> SensitivityResult:
    """Coverage/gap sensitivity table over both missingness mechanisms."""
    coverages = [float(c) for c in coverages]
    gaps = [float(g) for g in gaps]
    tasks = [
        (
            gen.mix_seed(master_seed, _SENSITIVITY_TAG),
            mech,
            ci,
            gi,
            round(1.0 - c, 10),
            g,
            n_seeds,
            n_systems,
            n_items,
            trials,
        )
        for mech in MECHANISMS
        for ci, c in enumerate(coverages)
        for gi, g in enumerate(gaps)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_sweep_cell, tasks, chunksize=4))
    else:
        raw = [_sweep_cell(t) for t in tasks]
    raw.sort(key=lambda r: (r[1], r[2], r[0]))
    rows = []
    valid = True
    for mech, ci, gi, cell_avg, cell_irt, failures in raw:
        if np.isnan(cell_avg).mean() > FAILED_SEED_BUDGET:
            valid = False
        rows.append(
            {
                "coverage": coverages[ci],
                "gap": gaps[gi],
                "mechanism": mech,
                "rho_avg_mean": float(np.nanmean(cell_avg)),
                "rho_irt_mean": float(np.nanmean(cell_irt)),
                "n_seeds": int(np.sum(~np.isnan(cell_avg))),
            }
        )
    return SensitivityResult(rows=tuple(rows), valid=valid)


def decision_rule(
    matrix: ResponseMatrix,
    coverage_threshold: float = 0.95,
    cv_threshold: float = 0.25,
) -> DecisionVerdict:
    """Averaging is adequate only with near-complete coverage and low
    difficulty heterogeneity; otherwise recommend the latent-trait fit."""
    cov = coverage(matrix)
    heterogeneity = estimate_difficulty_heterogeneity(matrix)
    if cov > coverage_threshold and heterogeneity <= cv_threshold:
        verdict = "averaging_adequate"
        rationale = (
            f"coverage {cov:.3f} > {coverage_threshold} and per-item rate CV "
            f"{heterogeneity:.3f} <= {cv_threshold}: simple averaging is adequate"
        )
    else:
        verdict = "use_irt"
        reasons = []
        if cov <= coverage_threshold:
            reasons.append(f"coverage {cov:.3f} <= {coverage_threshold}")
        if heterogeneity > cv_threshold:
            reasons.append(
                f"per-item rate CV {heterogeneity:.3f} > {cv_threshold}"
            )
        rationale = "; ".join(reasons) + ": use the latent-trait ranking"
    return DecisionVerdict(
        coverage=cov,
        heterogeneity=heterogeneity,
        verdict=verdict,
        rationale=rationale,
    )


def expected_average_bias(theta: float, items: ItemParameterSet) -> float:
    """Noise-free expected simple average of a system over an item subset:
    mean of sigma(a_i (theta - b_i))."""
    if len(items) == 0:
        raise ValueError("item subset must be nonempty")
    return float(np.mean(expit(items.a * (theta - items.b))))


# --- Result writers ---------------------------------------------------------


def write_table1(results: Iterable[DomainResult], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "domain",
                "coverage",
                "difficulty_gap",
                "rho_avg_mean",
                "rho_avg_std",
                "rho_irt_mean",
                "rho_irt_std",
                "verdict",
            ]
        )
        for r in results:
            writer.writerow(
                [
                    r.name,
                    _fmt(r.coverage),
                    _fmt(r.difficulty_gap),
                    _fmt(r.rho_avg_mean),
                    _fmt(r.rho_avg_std),
                    _fmt(r.rho_irt_mean),
                    _fmt(r.rho_irt_std),
                    r.verdict,
                ]
            )


def write_table2(results: Iterable[DomainResult], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "domain",
                "S",
                "D",
                "S_times_D",
                "rho_avg_mean",
                "rho_avg_std",
                "rho_irt_mean",
                "rho_irt_std",
            ]
        )
        for r in results:
            writer.writerow(
                [
                    r.name,
                    _fmt(1.0 - r.coverage),
                    _fmt(r.difficulty_gap),
                    _fmt(r.s_times_d),
                    _fmt(r.rho_avg_mean),
                    _fmt(r.rho_avg_std),
                    _fmt(r.rho_irt_mean),
                    _fmt(r.rho_irt_std),
                ]
            )


def write_sweep_csv(sweep: SweepResult, mechanism: str, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    avg_mean = sweep.rho_avg_mean(mechanism)
    avg_std = sweep.rho_avg_std(mechanism)
    irt_mean = sweep.rho_irt_mean(mechanism)
    irt_std = sweep.rho_irt_std(mechanism)
    n_ok = sweep.seeds_ok(mechanism)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "S",
                "D",
                "mechanism",
                "rho_avg_mean",
                "rho_avg_std",
                "rho_irt_mean",
                "rho_irt_std",
                "n_seeds",
            ]
        )
        for si, s in enumerate(sweep.s_values):
            for di, d in enumerate(sweep.d_values):
                writer.writerow(
                    [
                        _fmt(s),
                        _fmt(d),
                        mechanism,
                        _fmt(avg_mean[si, di]),
                        _fmt(avg_std[si, di]),
                        _fmt(irt_mean[si, di]),
                        _fmt(irt_std[si, di]),
                        int(n_ok[si, di]),
                    ]
                )


def write_regression_json(analysis: SweepAnalysis, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(analysis.to_dict(), indent=2, sort_keys=True) + "\n")


def write_sensitivity_csv(result: SensitivityResult, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["coverage", "gap", "mechanism", "rho_avg_mean", "rho_irt_mean", "n_seeds"]
        )
        for row in result.rows:
            writer.writerow(
                [
                    _fmt(row["coverage"]),
                    _fmt(row["gap"]),
                    row["mechanism"],
                    _fmt(row["rho_avg_mean"]),
                    _fmt(row["rho_irt_mean"]),
                    row["n_seeds"],
                ]
            )


def domain_report_lines(results: Iterable[DomainResult]) -> list[str]:
    lines = ["Domain reproduction (rank correlation vs ground truth)", ""]
    for r in results:
        lines.append(
            f"{r.name}: coverage={_fmt(r.coverage)} gap={_fmt(r.difficulty_gap)} "
            f"SxD={_fmt(r.s_times_d)}"
        )
        lines.append(
            f"  rho_avg = {_fmt(r.rho_avg_mean)} +/- {_fmt(r.rho_avg_std)}   "
            f"rho_irt = {_fmt(r.rho_irt_mean)} +/- {_fmt(r.rho_irt_std)}   "
            f"[{r.verdict}]"
        )
        lines.append(
            f"  item difficulty recovery (mean Spearman) = "
            f"{_fmt(r.item_recovery.mean())}"
        )
        for key, per_method in sorted(r.displacements.items()):
            lines.append(
                f"  {key} system displacement: avg={_fmt(per_method['avg'].mean())} "
                f"irt={_fmt(per_method['irt'].mean())}"
            )
        lines.append("")
    return lines
