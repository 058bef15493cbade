"""Four-panel failure-surface figure.

Panels: A biased-missingness simple-average accuracy, B biased latent-trait
accuracy, C MCAR simple-average accuracy, D the IRT-minus-average gap.
Rank-correlation panels share one sequential color scale on [0.2, 1.0]; the
gap panel uses a diverging scale centered at zero.  Sparsity runs along the
horizontal axis, difficulty gap along the vertical.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colors

from .frame import SweepFrame, SweepFrameError, load_sweep_csv

RHO_SCALE = (0.2, 1.0)


def _panel_stats(grid: np.ndarray) -> dict:
    return {"min": float(grid.min()), "max": float(grid.max())}


def render_failure_surface(
    biased_csv: str | Path,
    mcar_csv: str | Path,
    output: str | Path,
    image_format: str | None = None,
) -> dict:
    """Render the figure and return per-panel min/max statistics."""
    biased = load_sweep_csv(biased_csv)
    mcar = load_sweep_csv(mcar_csv)
    if biased.mechanism == "mcar" and mcar.mechanism == "biased":
        biased, mcar = mcar, biased

    panels = (
        ("A: average ranking accuracy, biased missingness", biased.rho_avg, "rho"),
        ("B: latent-trait ranking accuracy, biased", biased.rho_irt, "rho"),
        ("C: average ranking accuracy, MCAR", mcar.rho_avg, "rho"),
        ("D: latent-trait advantage (biased)", biased.delta, "delta"),
    )

    fig, axes = plt.subplots(1, 4, figsize=(18, 4.2), constrained_layout=True)
    rho_norm = colors.Normalize(vmin=RHO_SCALE[0], vmax=RHO_SCALE[1])
    delta = biased.delta
    delta_limit = max(float(np.abs(delta).max()), 1e-3)
    delta_norm = colors.TwoSlopeNorm(vmin=-delta_limit, vcenter=0.0, vmax=delta_limit)

    def extent(frame: SweepFrame) -> tuple:
        s, d = frame.s_values, frame.d_values
        half_s = (s[1] - s[0]) / 2 if s.size > 1 else 0.5
        half_d = (d[1] - d[0]) / 2 if d.size > 1 else 0.5
        return (s[0] - half_s, s[-1] + half_s, d[0] - half_d, d[-1] + half_d)

    rho_image = None
    delta_image = None
    stats = {}
    for ax, (title, grid, kind) in zip(axes, panels):
        frame = mcar if title.startswith("C") else biased
        image = ax.imshow(
            grid.T,
            origin="lower",
            aspect="auto",
            extent=extent(frame),
            cmap="viridis" if kind == "rho" else "RdBu_r",
            norm=rho_norm if kind == "rho" else delta_norm,
        )
        if kind == "rho":
            rho_image = image
        else:
            delta_image = image
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("sparsity S")
        ax.set_ylabel("difficulty gap D")
        stats[title[0]] = _panel_stats(grid)

    fig.colorbar(rho_image, ax=axes[:3], shrink=0.9, label="rank correlation")
    fig.colorbar(delta_image, ax=axes[3], shrink=0.9, label="delta rho")

    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fmt = image_format or (output.suffix.lstrip(".") or "png")
    if output.suffix.lstrip(".") != fmt:
        output = output.with_suffix(f".{fmt}")
    fig.savefig(output, format=fmt, dpi=150)
    plt.close(fig)
    return stats


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_failure_surface",
        description="Render the 4-panel failure-surface figure from two "
        "sweep CSVs (biased and MCAR).",
    )
    parser.add_argument("biased_csv", help="sweep_biased.csv path")
    parser.add_argument("mcar_csv", help="sweep_mcar.csv path")
    parser.add_argument("-o", "--output", required=True, help="figure path")
    parser.add_argument("--format", choices=("png", "svg"), default=None)
    args = parser.parse_args(argv)
    try:
        stats = render_failure_surface(
            args.biased_csv, args.mcar_csv, args.output, args.format
        )
    except (SweepFrameError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for panel, values in sorted(stats.items()):
        print(f"panel {panel}: min={values['min']:.4f} max={values['max']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
