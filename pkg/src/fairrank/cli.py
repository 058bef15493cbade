"""Command-line interface.

Commands:
  domains      reproduce the four reference domains (table1/table2/report)
  sweep        run the sparsity x difficulty-gap grid (CSVs + regression)
  sensitivity  coverage/gap sensitivity table
  analyze      rank a user-supplied matrix CSV with both methods

Every command writes only inside the output directory (--out, falling back
to $FAIRRANK_OUT, then ./results) and is byte-reproducible for a fixed
master seed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as exp
from . import generate as gen
from . import model, stats
from .matrix import MatrixError, diagnose_mask, load_matrix_csv

_OUT_ENV = "FAIRRANK_OUT"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=42, help="master seed")
    parser.add_argument(
        "--out",
        default=None,
        help=f"output directory (default: ${_OUT_ENV} or ./results)",
    )
    parser.add_argument(
        "--theta-prior-std", type=float, default=None, help="ability prior std"
    )
    parser.add_argument(
        "--b-prior-std", type=float, default=None, help="difficulty prior std"
    )
    parser.add_argument(
        "--log-a-prior-std",
        type=float,
        default=None,
        help="log-discrimination prior std",
    )


def _priors(args: argparse.Namespace) -> model.PriorConfig:
    defaults = model.PriorConfig()
    return model.PriorConfig(
        theta_std=args.theta_prior_std or defaults.theta_std,
        b_std=args.b_prior_std or defaults.b_std,
        log_a_std=args.log_a_prior_std or defaults.log_a_std,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairrank",
        description="Rank sparse evaluation matrices by 2PL latent traits "
        "and compare against simple averaging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dom = sub.add_parser("domains", help="reproduce the reference domains")
    _add_common(p_dom)
    p_dom.add_argument("--seeds", type=int, default=20, help="seeds per domain")
    p_dom.add_argument(
        "--only", default=None, help="comma-separated domain subset to run"
    )

    p_sweep = sub.add_parser("sweep", help="run the sparsity/gap grid sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--seeds", type=int, default=15, help="seeds per cell")
    p_sweep.add_argument("--s-max", type=float, default=0.70)
    p_sweep.add_argument("--s-step", type=float, default=0.05)
    p_sweep.add_argument("--d-max", type=float, default=5.0)
    p_sweep.add_argument("--d-step", type=float, default=0.5)
    p_sweep.add_argument(
        "--regression-rows",
        choices=("cells", "seeds"),
        default="cells",
        help="regress on per-cell means or per-seed errors",
    )
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")

    p_sens = sub.add_parser("sensitivity", help="coverage/gap sensitivity table")
    _add_common(p_sens)
    p_sens.add_argument("--seeds", type=int, default=15, help="seeds per cell")
    p_sens.add_argument("--jobs", type=int, default=1, help="parallel workers")

    p_an = sub.add_parser("analyze", help="analyze a matrix CSV")
    _add_common(p_an)
    p_an.add_argument("csv", help="long-format matrix CSV path")
    p_an.add_argument("--coverage-threshold", type=float, default=0.95)
    p_an.add_argument("--cv-threshold", type=float, default=0.25)
    return parser


def _outdir(args: argparse.Namespace) -> Path:
    out = args.out or os.environ.get(_OUT_ENV) or "results"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _grid(max_value: float, step: float, start: float) -> list[float]:
    n = int(math.floor((max_value - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(max(n, 1))]


def cmd_domains(args: argparse.Namespace) -> int:
    outdir = _outdir(args)
    names = list(gen.DOMAIN_NAMES)
    if args.only:
        names = [n.strip() for n in args.only.split(",") if n.strip()]
        unknown = sorted(set(names) - set(gen.DOMAIN_NAMES))
        if unknown:
            print(f"unknown domain(s): {', '.join(unknown)}", file=sys.stderr)
            return 2
    results = []
    failed = []
    for name in names:
        try:
            results.append(
                exp.run_domain(
                    name,
                    n_seeds=args.seeds,
                    master_seed=args.seed,
                    priors=_priors(args),
                )
            )
        except (exp.ExperimentError, gen.GenerationError) as exc:
            failed.append((name, str(exc)))
            print(f"domain {name} failed: {exc}", file=sys.stderr)
    exp.write_table1(results, outdir / "table1.csv")
    exp.write_table2(results, outdir / "table2.csv")
    lines = exp.domain_report_lines(results)
    if failed:
        lines.append("FAILED domains:")
        lines.extend(f"  {name}: {msg}" for name, msg in failed)
        lines.append("")
    (outdir / "report.txt").write_text("\n".join(lines))
    for line in lines:
        print(line)
    return 1 if failed else 0


def cmd_sweep(args: argparse.Namespace) -> int:
    outdir = _outdir(args)
    sweep = exp.run_sweep(
        s_values=_grid(args.s_max, args.s_step, 0.0),
        d_values=_grid(args.d_max, args.d_step, args.d_step),
        n_seeds=args.seeds,
        master_seed=args.seed,
        jobs=args.jobs,
    )
    exp.write_sweep_csv(sweep, "biased", outdir / "sweep_biased.csv")
    exp.write_sweep_csv(sweep, "mcar", outdir / "sweep_mcar.csv")
    analysis = exp.analyze_sweep(sweep, rows=args.regression_rows)
    exp.write_regression_json(analysis, outdir / "regression.json")
    print(
        f"sweep: {sweep.s_values.size * sweep.d_values.size} cells per mechanism, "
        f"{sweep.n_seeds} seeds per cell, {len(sweep.failures)} failed seeds"
    )
    biased = analysis.interaction["biased"]
    print(
        "biased interaction: gamma="
        + ", ".join(f"{g:+.4f}" for g in biased.gamma)
        + f"  R^2={biased.r_squared:.4f}"
    )
    if analysis.power_law is not None:
        print(f"power law R^2={analysis.power_law.r_squared:.4f}", end="  ")
    if not math.isnan(analysis.mechanism_gap):
        print(f"mechanism gap (S>=0.40)={analysis.mechanism_gap:.4f}")
    else:
        print("mechanism gap (S>=0.40)=n/a (no cells at S>=0.40)")
    if not sweep.valid:
        print("sweep invalid: a cell exceeded the failed-seed budget", file=sys.stderr)
        return 1
    return 0


def cmd_sensitivity(args: argparse.Namespace) -> int:
    outdir = _outdir(args)
    result = exp.run_sensitivity(
        n_seeds=args.seeds, master_seed=args.seed, jobs=args.jobs
    )
    exp.write_sensitivity_csv(result, outdir / "sensitivity.csv")
    print(f"sensitivity: {len(result.rows)} rows -> {outdir / 'sensitivity.csv'}")
    if not result.valid:
        print("sensitivity invalid: a cell exceeded the failed-seed budget", file=sys.stderr)
        return 1
    return 0


def _print_analysis(
    matrix, verdict: exp.DecisionVerdict, fitted=None, abilities=None
) -> None:
    diag = diagnose_mask(matrix)
    print(f"systems: {matrix.n_systems}   items: {matrix.n_items}")
    print(
        f"coverage: {diag.coverage:.4f}   sparsity: {diag.sparsity:.4f}   "
        f"min items/system: {diag.min_items_per_system}   "
        f"min systems/item: {diag.min_systems_per_item}   "
        f"connected: {diag.bipartite_connected}"
    )
    print(f"difficulty heterogeneity (CV): {verdict.heterogeneity:.4f}")
    print(f"decision: {verdict.verdict}  ({verdict.rationale})")
    print()
    avg = stats.simple_average(matrix)
    if fitted is None:
        print("rankings (simple average only; latent-trait fit skipped):")
        order = np.argsort(avg.ranks)
        for j in order:
            print(
                f"  #{avg.ranks[j]:>4.1f}  {matrix.system_labels[j]:<24s} "
                f"score={avg.scores[j]:.4f}"
            )
        return
    irt = model.rank_by_ability(fitted)
    se = abilities.se_theta if abilities is not None else None
    print("rankings (by latent-trait ability; average shown for comparison):")
    header = f"  {'system':<24s} {'irt_rank':>8s} {'theta':>8s} {'se':>7s} {'avg_rank':>9s} {'avg_score':>10s}"
    print(header)
    for j in np.argsort(irt.ranks):
        se_text = f"{se[j]:.3f}" if se is not None else "  n/a"
        print(
            f"  {matrix.system_labels[j]:<24s} {irt.ranks[j]:>8.1f} "
            f"{fitted.abilities.theta[j]:>8.3f} {se_text:>7s} "
            f"{avg.ranks[j]:>9.1f} {avg.scores[j]:>10.4f}"
        )
    print()
    print("item difficulty estimates:")
    for i in np.argsort(fitted.items.b):
        print(
            f"  {matrix.item_labels[i]:<24s} b={fitted.items.b[i]:+.3f} "
            f"a={fitted.items.a[i]:.3f}"
        )


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        with open(args.csv, encoding="utf-8") as handle:
            matrix = load_matrix_csv(handle)
    except OSError as exc:
        print(f"cannot read {args.csv}: {exc}", file=sys.stderr)
        return 1
    except MatrixError as exc:
        print(f"invalid matrix CSV: {exc}", file=sys.stderr)
        return 1
    verdict = exp.decision_rule(
        matrix,
        coverage_threshold=args.coverage_threshold,
        cv_threshold=args.cv_threshold,
    )
    diag = diagnose_mask(matrix)
    degraded = (
        diag.min_items_per_system < 2
        or diag.min_systems_per_item < 3
        or not diag.bipartite_connected
    )
    fitted = abilities = None
    if degraded:
        print(
            "warning: matrix fails fit preconditions "
            "(need >=2 items/system, >=3 systems/item, connected mask); "
            "reporting diagnostics and decision rule only",
            file=sys.stderr,
        )
    else:
        fitted = model.fit(matrix, priors=_priors(args))
        abilities = model.standard_errors(matrix, fitted, priors=_priors(args))
    _print_analysis(matrix, verdict, fitted, abilities)
    if args.out is not None:
        outdir = _outdir(args)
        payload = {
            "decision": {
                "coverage": verdict.coverage,
                "heterogeneity": verdict.heterogeneity,
                "verdict": verdict.verdict,
                "rationale": verdict.rationale,
            },
            "fit": (
                model.fit_to_dict(
                    model.Fit2PL(
                        abilities=abilities,
                        items=fitted.items,
                        objective=fitted.objective,
                        converged=fitted.converged,
                        iterations=fitted.iterations,
                        gradient_norm=fitted.gradient_norm,
                    ),
                    matrix.system_labels,
                    matrix.item_labels,
                )
                if fitted is not None
                else None
            ),
        }
        (outdir / "analyze.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "domains": cmd_domains,
        "sweep": cmd_sweep,
        "sensitivity": cmd_sensitivity,
        "analyze": cmd_analyze,
    }
    try:
        return handlers[args.command](args)
    except (exp.ExperimentError, gen.GenerationError, model.FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
