import io

import numpy as np
import pytest

from fairrank import generate as gen
from fairrank.matrix import (
    MatrixError,
    ResponseMatrix,
    bipartite_connected,
    coverage,
    diagnose_mask,
    difficulty_gap,
    estimate_difficulty_heterogeneity,
    load_matrix_csv,
    save_matrix_csv,
)


def small_matrix(cells, n_systems=2, n_items=2):
    return ResponseMatrix(
        n_systems=n_systems,
        n_items=n_items,
        cells=cells,
        system_labels=tuple(f"sys{j}" for j in range(n_systems)),
        item_labels=tuple(f"item{i}" for i in range(n_items)),
    )


class TestResponseMatrixValidation:
    def test_successes_above_trials_rejected(self):
        with pytest.raises(MatrixError):
            small_matrix({(0, 0): (7, 5)})

    def test_zero_trials_rejected(self):
        with pytest.raises(MatrixError):
            small_matrix({(0, 0): (0, 0)})

    def test_minimum_shape(self):
        with pytest.raises(MatrixError):
            ResponseMatrix(1, 2, {}, ("a",), ("x", "y"))

    def test_out_of_range_cell(self):
        with pytest.raises(MatrixError):
            small_matrix({(2, 0): (1, 1)})

    def test_duplicate_labels_rejected(self):
        with pytest.raises(MatrixError):
            ResponseMatrix(2, 2, {}, ("a", "a"), ("x", "y"))


class TestCoverage:
    def test_full_12x8(self):
        cells = {(j, i): (1, 2) for j in range(12) for i in range(8)}
        m = small_matrix(cells, 12, 8)
        assert coverage(m) == 1.0

    def test_clinical_domain_coverage(self):
        config = gen.domain_config("clinical")
        assert config.coverage == pytest.approx(0.65)

    def test_single_observed_cell(self):
        assert coverage(small_matrix({(0, 0): (1, 1)})) == 0.25


class TestDifficultyGap:
    def test_glue_items(self):
        config = gen.domain_config("nlp")
        assert difficulty_gap(config.items) == pytest.approx(0.89 - (-0.72))

    def test_cyber_items(self):
        config = gen.domain_config("cyber")
        assert difficulty_gap(config.items) == pytest.approx(2.00 - (-1.50))

    def test_single_item(self):
        assert difficulty_gap([0.37]) == 0.0

    def test_empty_errors(self):
        with pytest.raises(MatrixError):
            difficulty_gap([])

    def test_translation_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            b = rng.normal(size=rng.integers(1, 9))
            c = rng.normal()
            assert difficulty_gap(b + c) == pytest.approx(difficulty_gap(b))


class TestHeterogeneity:
    def test_identical_rates(self):
        cells = {(j, i): (5, 10) for j in range(3) for i in range(3)}
        assert estimate_difficulty_heterogeneity(small_matrix(cells, 3, 3)) == 0.0

    def test_hand_computed_cv(self):
        # item rates 0.9, 0.5, 0.1 -> population std 0.32659..., mean 0.5
        cells = {(0, 0): (9, 10), (0, 1): (5, 10), (0, 2): (1, 10), (1, 0): (9, 10), (1, 1): (5, 10), (1, 2): (1, 10)}
        cv = estimate_difficulty_heterogeneity(small_matrix(cells, 2, 3))
        assert cv == pytest.approx(0.6531972647421808, abs=1e-12)

    def test_matches_direct_recomputation(self):
        config = gen.domain_config("nlp")
        m = gen.generate_responses(
            config.theta_true, config.items, config.mask, config.trials, seed=11
        )
        succ = {}
        trials = {}
        for (_, i), (s, t) in m.cells.items():
            succ[i] = succ.get(i, 0) + s
            trials[i] = trials.get(i, 0) + t
        rates = np.array([succ[i] / trials[i] for i in range(m.n_items)])
        expected = rates.std() / rates.mean()
        assert estimate_difficulty_heterogeneity(m) == pytest.approx(expected, rel=1e-12)

    def test_empty_item_errors(self):
        cells = {(0, 0): (1, 2), (1, 0): (1, 2)}
        with pytest.raises(MatrixError):
            estimate_difficulty_heterogeneity(small_matrix(cells))

    def test_all_zero_rates_error(self):
        cells = {(j, i): (0, 5) for j in range(2) for i in range(2)}
        with pytest.raises(MatrixError):
            estimate_difficulty_heterogeneity(small_matrix(cells))


def brute_force_connected(n_systems, n_items, pairs):
    """Independent DFS over the bipartite graph, systems as 0..J-1 and
    items as J..J+I-1."""
    pairs = list(pairs)
    if not pairs:
        return False
    adj = {v: set() for v in range(n_systems + n_items)}
    for j, i in pairs:
        adj[j].add(n_systems + i)
        adj[n_systems + i].add(j)
    seen = set()
    stack = [0]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(adj[v] - seen)
    return len(seen) == n_systems + n_items


class TestDiagnoseMask:
    def test_full_mask(self):
        cells = {(j, i): (1, 1) for j in range(4) for i in range(3)}
        d = diagnose_mask(small_matrix(cells, 4, 3))
        assert d.min_items_per_system == 3
        assert d.min_systems_per_item == 4
        assert d.bipartite_connected
        assert d.coverage == 1.0 and d.sparsity == 0.0

    def test_clinical_mask(self):
        config = gen.domain_config("clinical")
        m = gen.generate_responses(
            config.theta_true, config.items, config.mask, config.trials, seed=0
        )
        d = diagnose_mask(m)
        assert d.min_items_per_system >= 2
        assert d.min_systems_per_item >= 3
        assert d.bipartite_connected

    def test_disjoint_blocks_disconnected(self):
        cells = {(0, 0): (1, 1), (1, 0): (1, 1), (2, 1): (1, 1), (3, 1): (1, 1)}
        assert not diagnose_mask(small_matrix(cells, 4, 2)).bipartite_connected

    def test_coverage_plus_sparsity_is_one(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            j_n, i_n = int(rng.integers(2, 13)), int(rng.integers(2, 9))
            cells = {
                (j, i): (1, 1)
                for j in range(j_n)
                for i in range(i_n)
                if rng.random() < 0.6
            }
            if not cells:
                continue
            d = diagnose_mask(small_matrix(cells, j_n, i_n))
            assert d.coverage + d.sparsity == 1.0

    def test_connectivity_matches_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            j_n, i_n = int(rng.integers(2, 13)), int(rng.integers(2, 9))
            pairs = [
                (j, i)
                for j in range(j_n)
                for i in range(i_n)
                if rng.random() < rng.uniform(0.05, 0.5)
            ]
            assert bipartite_connected(j_n, i_n, pairs) == brute_force_connected(
                j_n, i_n, pairs
            )


CSV_3_ROWS = "system,item,successes,trials\na,x,3,5\na,y,1,5\nb,x,2,5\n"


class TestCsv:
    def test_three_row_file(self):
        m = load_matrix_csv(io.StringIO(CSV_3_ROWS))
        assert (m.n_systems, m.n_items) == (2, 2)
        assert coverage(m) == 0.75
        assert m.cells[(0, 0)] == (3, 5)

    @staticmethod
    def labeled_cells(m):
        return {
            (m.system_labels[j], m.item_labels[i]): value
            for (j, i), value in m.cells.items()
        }

    def test_round_trip_identity(self):
        # indices may be reassigned by appearance order, but every labeled
        # cell must come back bit-exact
        config = gen.domain_config("cyber")
        m = gen.generate_responses(
            config.theta_true,
            config.items,
            config.mask,
            config.trials,
            seed=4,
            system_labels=config.system_labels,
            item_labels=config.item_labels,
        )
        buffer = io.StringIO()
        save_matrix_csv(m, buffer)
        again = load_matrix_csv(io.StringIO(buffer.getvalue()))
        assert self.labeled_cells(again) == self.labeled_cells(m)
        assert set(again.system_labels) == set(m.system_labels)
        assert set(again.item_labels) == set(m.item_labels)
        buffer2 = io.StringIO()
        save_matrix_csv(again, buffer2)
        assert sorted(buffer2.getvalue().splitlines()) == sorted(
            buffer.getvalue().splitlines()
        )

    def test_successes_above_trials_rejected_with_line(self):
        text = "system,item,successes,trials\na,x,7,5\n"
        with pytest.raises(MatrixError, match="line 2"):
            load_matrix_csv(io.StringIO(text))

    def test_duplicate_pair_rejected(self):
        text = CSV_3_ROWS + "a,x,1,5\n"
        with pytest.raises(MatrixError, match="duplicate"):
            load_matrix_csv(io.StringIO(text))

    def test_malformed_row_reports_line(self):
        text = "system,item,successes,trials\na,x,3,5\na,y,many,5\n"
        with pytest.raises(MatrixError, match="line 3"):
            load_matrix_csv(io.StringIO(text))

    def test_bad_header(self):
        with pytest.raises(MatrixError, match="header"):
            load_matrix_csv(io.StringIO("sys,item,s,t\na,x,1,1\n"))

    def test_comma_in_label_rejected_on_save(self):
        m = ResponseMatrix(2, 2, {(0, 0): (1, 1), (1, 1): (1, 1)}, ("a,b", "c"), ("x", "y"))
        with pytest.raises(MatrixError, match="comma"):
            save_matrix_csv(m, io.StringIO())

    def test_rows_sorted_on_save(self):
        m = small_matrix({(1, 1): (1, 2), (0, 0): (1, 2), (1, 0): (2, 2)})
        buffer = io.StringIO()
        save_matrix_csv(m, buffer)
        body = buffer.getvalue().splitlines()[1:]
        assert body == ["sys0,item0,1,2", "sys1,item0,2,2", "sys1,item1,1,2"]
