import csv
import subprocess
import sys

import numpy as np
import pytest

from failure_surface_plots.frame import SweepFrameError, load_sweep_csv
from failure_surface_plots.render import main, render_failure_surface

HEADER = [
    "S", "D", "mechanism",
    "rho_avg_mean", "rho_avg_std", "rho_irt_mean", "rho_irt_std", "n_seeds",
]


def write_sweep_csv(path, mechanism, s_values, d_values, avg_fn, irt_fn, skip=()):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HEADER)
        for s in s_values:
            for d in d_values:
                if (s, d) in skip:
                    continue
                writer.writerow(
                    [f"{s:.4f}", f"{d:.4f}", mechanism,
                     f"{avg_fn(s, d):.4f}", "0.0100",
                     f"{irt_fn(s, d):.4f}", "0.0050", 15]
                )


@pytest.fixture
def synthetic_pair(tmp_path):
    s_values = [0.0, 0.25, 0.5, 0.7]
    d_values = [0.5, 2.0, 3.5, 5.0]
    biased = tmp_path / "sweep_biased.csv"
    mcar = tmp_path / "sweep_mcar.csv"
    write_sweep_csv(
        biased, "biased", s_values, d_values,
        lambda s, d: max(0.24, 1.0 - 0.2 * s * d),
        lambda s, d: 0.995,
    )
    write_sweep_csv(
        mcar, "mcar", s_values, d_values,
        lambda s, d: max(0.77, 1.0 - 0.05 * s * d),
        lambda s, d: 0.999,
    )
    return biased, mcar


class TestLoad:
    def test_grid_shape(self, synthetic_pair):
        frame = load_sweep_csv(synthetic_pair[0])
        assert frame.mechanism == "biased"
        assert frame.rho_avg.shape == (4, 4)
        assert frame.rho_avg[0, 0] == pytest.approx(1.0)
        assert frame.rho_avg[-1, -1] == pytest.approx(0.3, abs=0.01)

    def test_incomplete_grid_lists_missing_cells(self, tmp_path):
        path = tmp_path / "holes.csv"
        write_sweep_csv(
            path, "biased", [0.0, 0.5], [1.0, 2.0],
            lambda s, d: 0.9, lambda s, d: 0.99, skip={(0.5, 2.0)},
        )
        with pytest.raises(SweepFrameError, match=r"S=0.5, D=2"):
            load_sweep_csv(path)

    def test_mixed_mechanisms_rejected(self, tmp_path):
        path = tmp_path / "mixed.csv"
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(HEADER)
            writer.writerow(["0.0", "1.0", "biased", "1.0", "0", "1.0", "0", 15])
            writer.writerow(["0.0", "2.0", "mcar", "1.0", "0", "1.0", "0", 15])
        with pytest.raises(SweepFrameError, match="mechanism"):
            load_sweep_csv(path)

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("S,D\n0.0,1.0\n")
        with pytest.raises(SweepFrameError, match="missing columns"):
            load_sweep_csv(path)


class TestRender:
    def test_creates_figure_and_stats(self, synthetic_pair, tmp_path):
        out = tmp_path / "figure.png"
        stats = render_failure_surface(*synthetic_pair, out)
        assert out.exists() and out.stat().st_size > 0
        assert set(stats) == {"A", "B", "C", "D"}
        assert stats["B"]["min"] == pytest.approx(0.995)
        # corner cell: rho_avg = 1 - 0.2*0.7*5 = 0.30, so delta = 0.695
        assert stats["D"]["max"] == pytest.approx(0.995 - 0.30, abs=1e-9)

    def test_rerender_identical_statistics(self, synthetic_pair, tmp_path):
        first = render_failure_surface(*synthetic_pair, tmp_path / "one.png")
        second = render_failure_surface(*synthetic_pair, tmp_path / "two.png")
        assert first == second

    def test_svg_format(self, synthetic_pair, tmp_path):
        out = tmp_path / "figure.svg"
        render_failure_surface(*synthetic_pair, out, image_format="svg")
        assert out.read_text().lstrip().startswith("<?xml")

    def test_cli_reports_panels(self, synthetic_pair, tmp_path, capsys):
        out = tmp_path / "fig.png"
        code = main([str(synthetic_pair[0]), str(synthetic_pair[1]), "-o", str(out)])
        assert code == 0
        assert "panel B" in capsys.readouterr().out
        assert out.exists()

    def test_cli_error_on_incomplete(self, tmp_path, capsys):
        path = tmp_path / "holes.csv"
        write_sweep_csv(
            path, "biased", [0.0, 0.5], [1.0, 2.0],
            lambda s, d: 0.9, lambda s, d: 0.99, skip={(0.0, 1.0)},
        )
        code = main([str(path), str(path), "-o", str(tmp_path / "fig.png")])
        assert code == 1
        assert "missing cells" in capsys.readouterr().err


@pytest.fixture(scope="module")
def real_sweep(tmp_path_factory):
    """Default-grid sweep produced through the fairrank CLI."""
    outdir = tmp_path_factory.mktemp("sweep")
    completed = subprocess.run(
        [sys.executable, "-m", "fairrank.cli", "sweep", "--out", str(outdir)],
        capture_output=True,
        text=True,
        timeout=900,
    )
    assert completed.returncode == 0, completed.stderr
    return outdir / "sweep_biased.csv", outdir / "sweep_mcar.csv"


class TestFullPipeline:
    def test_four_panel_figure_acceptance(self, real_sweep, tmp_path):
        out = tmp_path / "failure_surface.png"
        stats = render_failure_surface(*real_sweep, out)
        assert out.exists() and out.stat().st_size > 0
        print(
            "PASS-CHECK panels:",
            {k: (round(v["min"], 4), round(v["max"], 4)) for k, v in stats.items()},
        )
        # Panel B (biased latent-trait accuracy) stays in the top band
        assert stats["B"]["min"] >= 0.98
        # the advantage peaks in the high-sparsity, high-gap quadrant
        frame = load_sweep_csv(real_sweep[0])
        delta = frame.delta
        si, di = np.unravel_index(np.argmax(delta), delta.shape)
        assert frame.s_values[si] >= 0.5
        assert frame.d_values[di] >= 3.5
