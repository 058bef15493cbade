import json

import pytest

from fairrank import generate as gen
from fairrank.cli import main
from fairrank.matrix import save_matrix_csv


def run_cli(*argv):
    return main(list(argv))


def export_domain_csv(name, path, seed=0):
    config = gen.domain_config(name)
    m = gen.generate_responses(
        config.theta_true,
        config.items,
        config.mask,
        config.trials,
        seed=seed,
        system_labels=config.system_labels,
        item_labels=config.item_labels,
    )
    with open(path, "w") as handle:
        save_matrix_csv(m, handle)
    return m


class TestDomainsCommand:
    def test_single_domain(self, tmp_path, capsys):
        code = run_cli("domains", "--only", "nlp", "--seeds", "2", "--out", str(tmp_path))
        assert code == 0
        lines = (tmp_path / "table1.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[1].startswith("nlp,")
        assert "1.0000" in lines[1]
        assert (tmp_path / "table2.csv").exists()
        assert (tmp_path / "report.txt").exists()

    def test_all_domains_row_count(self, tmp_path):
        code = run_cli("domains", "--seeds", "2", "--out", str(tmp_path))
        assert code == 0
        assert len((tmp_path / "table1.csv").read_text().splitlines()) == 5

    def test_unknown_domain(self, tmp_path, capsys):
        code = run_cli("domains", "--only", "sports", "--out", str(tmp_path))
        assert code == 2
        assert "unknown domain" in capsys.readouterr().err

    def test_writes_only_inside_outdir(self, tmp_path, monkeypatch):
        workdir = tmp_path / "cwd"
        outdir = tmp_path / "out"
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        assert run_cli("domains", "--only", "nlp", "--seeds", "2", "--out", str(outdir)) == 0
        assert list(workdir.iterdir()) == []

    def test_seed_changes_nothing_for_full_coverage_but_reproduces(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run_cli("domains", "--only", "clinical", "--seeds", "3", "--out", str(out_a)) == 0
        assert run_cli("domains", "--only", "clinical", "--seeds", "3", "--out", str(out_b)) == 0
        assert (out_a / "table1.csv").read_bytes() == (out_b / "table1.csv").read_bytes()


class TestSweepCommand:
    def test_reduced_grid(self, tmp_path):
        code = run_cli(
            "sweep", "--s-max", "0.2", "--s-step", "0.1", "--d-max", "1.0",
            "--d-step", "0.5", "--seeds", "2", "--out", str(tmp_path),
        )
        assert code == 0
        for mech in ("biased", "mcar"):
            lines = (tmp_path / f"sweep_{mech}.csv").read_text().splitlines()
            assert len(lines) == 1 + 3 * 2
        payload = json.loads((tmp_path / "regression.json").read_text())
        assert len(payload["biased"]["interaction"]["gamma"]) == 4

    def test_byte_identical_reruns(self, tmp_path):
        args = ["sweep", "--s-max", "0.2", "--s-step", "0.1", "--d-max", "1.0",
                "--d-step", "0.5", "--seeds", "2", "--seed", "7"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run_cli(*args, "--out", str(out_a)) == 0
        assert run_cli(*args, "--out", str(out_b)) == 0
        for name in ("sweep_biased.csv", "sweep_mcar.csv", "regression.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_regression_rows_flag(self, tmp_path):
        code = run_cli(
            "sweep", "--s-max", "0.3", "--s-step", "0.1", "--d-max", "1.0",
            "--d-step", "0.5", "--seeds", "2", "--regression-rows", "seeds",
            "--out", str(tmp_path),
        )
        assert code == 0
        payload = json.loads((tmp_path / "regression.json").read_text())
        assert payload["rows"] == "seeds"


class TestSensitivityCommand:
    def test_runs_and_writes(self, tmp_path):
        code = run_cli("sensitivity", "--seeds", "1", "--out", str(tmp_path))
        assert code == 0
        lines = (tmp_path / "sensitivity.csv").read_text().splitlines()
        assert len(lines) == 1 + 8 * 4 * 2


class TestAnalyzeCommand:
    def test_clinical_matrix_divergent_rankings(self, tmp_path, capsys):
        csv_path = tmp_path / "clinical.csv"
        export_domain_csv("clinical", csv_path, seed=gen.mix_seed(42, 2, 0))
        code = run_cli("analyze", str(csv_path), "--out", str(tmp_path))
        assert code == 0
        out = capsys.readouterr().out
        assert "use_irt" in out
        payload = json.loads((tmp_path / "analyze.json").read_text())
        assert payload["decision"]["verdict"] == "use_irt"
        systems = payload["fit"]["systems"]
        best = max(systems, key=lambda s: s["theta"])
        assert best["label"] == "True Miracle Drug"
        assert all(s["se"] > 0 for s in systems)

    def test_nlp_matrix_adequate_and_consistent(self, tmp_path, capsys):
        csv_path = tmp_path / "nlp.csv"
        export_domain_csv("nlp", csv_path, seed=gen.mix_seed(42, 1, 0))
        code = run_cli("analyze", str(csv_path))
        assert code == 0
        assert "averaging_adequate" in capsys.readouterr().out

    def test_degraded_mode_on_thin_matrix(self, tmp_path, capsys):
        # one system observed on a single item: fit preconditions fail but
        # diagnostics and the decision rule still come out, exit 0
        text = (
            "system,item,successes,trials\n"
            "a,x,5,10\na,y,6,10\nb,x,5,10\nb,y,2,10\nc,x,4,10\nc,y,5,10\nd,x,9,10\n"
        )
        csv_path = tmp_path / "thin.csv"
        csv_path.write_text(text)
        code = run_cli("analyze", str(csv_path))
        captured = capsys.readouterr()
        assert code == 0
        assert "warning" in captured.err
        assert "decision" in captured.out

    def test_parse_error_exit_code(self, tmp_path, capsys):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text("system,item,successes,trials\na,x,9,5\n")
        code = run_cli("analyze", str(csv_path))
        assert code == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert run_cli("analyze", "/nonexistent/matrix.csv") == 1

    def test_out_env_fallback(self, tmp_path, monkeypatch, capsys):
        csv_path = tmp_path / "nlp.csv"
        export_domain_csv("nlp", csv_path, seed=1)
        env_out = tmp_path / "env-results"
        monkeypatch.setenv("FAIRRANK_OUT", str(env_out))
        code = run_cli("analyze", str(csv_path), "--out", str(env_out))
        assert code == 0
        assert (env_out / "analyze.json").exists()


class TestEnvOutDirectory:
    def test_domains_uses_env_when_no_flag(self, tmp_path, monkeypatch):
        env_out = tmp_path / "from-env"
        monkeypatch.setenv("FAIRRANK_OUT", str(env_out))
        monkeypatch.chdir(tmp_path)
        assert run_cli("domains", "--only", "nlp", "--seeds", "2") == 0
        assert (env_out / "table1.csv").exists()
