import numpy as np
import pytest
from scipy import optimize, sparse

from liplearn.graph import WeightedGraph, normalize_max_weight
from liplearn.solver import (
    GraphConnectivityError,
    Init,
    LabelProblem,
    SolverError,
    inf_laplacian,
    inf_laplacian_all,
    lipschitz_gradient,
    save_diagnostics,
    save_solution_csv,
    solve,
    verify_comparison,
)

from conftest import path_graph, random_epsilon_instance


class TestInfLaplacian:
    def test_constant_is_zero(self):
        g = path_graph([1.0, 1.0, 1.0])
        u = np.full(4, 2.5)
        for x in range(4):
            assert inf_laplacian(g, u, x) == 0.0

    def test_path_midpoint(self):
        g = path_graph([1.0, 1.0])
        u = np.array([0.0, 0.5, 1.0])
        assert inf_laplacian(g, u, 1) == pytest.approx(0.0)

    def test_star_example(self):
        # center 0 linked to vertices 1, 2 with weights 2 and 1;
        # u_center = 0, u_neighbors = (-1, 1):
        # max{1*1, 0} + min{2*(-1), 0} = -1
        w = sparse.csr_matrix(np.array([[0.0, 2.0, 1.0], [2.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        g = WeightedGraph(w)
        u = np.array([0.0, -1.0, 1.0])
        assert inf_laplacian(g, u, 0) == pytest.approx(-1.0)

    def test_isolated_vertex_zero_with_candidate(self):
        w = sparse.csr_matrix(([1.0, 1.0], ([0, 1], [1, 0])), shape=(3, 3))
        g = WeightedGraph(w)
        u = np.array([0.0, 1.0, 5.0])
        assert inf_laplacian(g, u, 2) == 0.0
        with pytest.raises(ValueError):
            inf_laplacian(g, u, 2, zero_candidate=False)

    def test_index_validation(self):
        g = path_graph([1.0])
        with pytest.raises(IndexError):
            inf_laplacian(g, np.zeros(2), 5)


class TestSolveSmall:
    def test_equal_weight_path_midpoint(self):
        g = path_graph([1.0, 1.0])
        sol = solve(LabelProblem(g, np.array([0, 2]), np.array([0.0, 1.0])), tol=1e-8)
        assert sol.converged
        assert sol.u[1] == pytest.approx(0.5, abs=1e-6)

    def test_weighted_path_against_root_oracle(self):
        # independent oracle: solve max{2(0-t), 1(1-t), 0} + min{...} = 0
        def lb(t):
            vals = [2.0 * (0.0 - t), 1.0 * (1.0 - t), 0.0]
            return max(vals) + min(vals)

        t_star = optimize.brentq(lb, 0.0, 1.0, xtol=1e-12)
        assert t_star == pytest.approx(1.0 / 3.0, abs=1e-10)
        g = path_graph([2.0, 1.0])
        sol = solve(LabelProblem(g, np.array([0, 2]), np.array([0.0, 1.0])), tol=1e-7)
        assert sol.u[1] == pytest.approx(t_star, abs=1e-5)

    def test_labels_pinned_exactly(self):
        g = path_graph([1.0, 2.0, 0.5])
        labels = np.array([0, 3])
        vals = np.array([-2.0, 7.0])
        sol = solve(LabelProblem(g, labels, vals), tol=1e-6)
        assert np.array_equal(sol.u[labels], vals)

    def test_a_priori_bounds(self):
        for seed in range(10):
            graph, labeled, g, _ = random_epsilon_instance(seed, n_max=80)
            sol = solve(LabelProblem(graph, labeled, g), tol=1e-6)
            assert sol.u.min() >= g.min() - 1e-9
            assert sol.u.max() <= g.max() + 1e-9

    def test_residual_matches_reference_operator(self):
        graph, labeled, g, _ = random_epsilon_instance(123, n_max=120)
        prob = LabelProblem(graph, labeled, g)
        sol = solve(prob, tol=1e-6)
        lu = inf_laplacian_all(graph, sol.u)
        free = np.ones(graph.n_vertices, dtype=bool)
        free[labeled] = False
        ref = np.max(np.abs(lu[free])) / graph.max_weight
        assert ref == pytest.approx(sol.final_residual, rel=1e-10)
        assert ref < 1e-6

    def test_zero_candidate_equivalence_at_convergence(self):
        graph, labeled, g, _ = random_epsilon_instance(7, n_max=100)
        tol = 1e-7
        sol = solve(LabelProblem(graph, labeled, g), tol=tol)
        w = graph.weights
        for x in range(graph.n_vertices):
            sl = slice(w.indptr[x], w.indptr[x + 1])
            if sl.stop == sl.start:
                continue
            vals = w.data[sl] * (sol.u[w.indices[sl]] - sol.u[x])
            if vals.max() >= 0.0 >= vals.min():
                with_c = inf_laplacian(graph, sol.u, x)
                without = inf_laplacian(graph, sol.u, x, zero_candidate=False)
                assert abs(with_c - without) < tol


class TestInvariances:
    @pytest.mark.parametrize("seed", range(5))
    def test_shift(self, seed):
        graph, labeled, g, _ = random_epsilon_instance(seed)
        c = 3.7
        tol = 1e-7
        s1 = solve(LabelProblem(graph, labeled, g), tol=tol)
        s2 = solve(LabelProblem(graph, labeled, g + c), tol=tol)
        assert np.max(np.abs(s2.u - s1.u - c)) <= 2e-5

    @pytest.mark.parametrize("lam", [0.5, 2.0, -1.5])
    def test_scaling(self, lam):
        graph, labeled, g, _ = random_epsilon_instance(11)
        tol = 1e-8
        s1 = solve(LabelProblem(graph, labeled, g), tol=tol)
        s2 = solve(LabelProblem(graph, labeled, lam * g), tol=tol)
        assert np.max(np.abs(s2.u - lam * s1.u)) <= (1.0 + abs(lam)) * 1e-5

    def test_weight_rescaling(self):
        graph, labeled, g, _ = random_epsilon_instance(13)
        tol = 1e-7
        s1 = solve(LabelProblem(graph, labeled, g), tol=tol)
        w = graph.weights.copy()
        w.data = w.data * 7.5
        scaled = WeightedGraph(w, alpha=graph.alpha, degrees=graph.degrees)
        s2 = solve(LabelProblem(scaled, labeled, g), tol=tol)
        assert np.max(np.abs(s2.u - s1.u)) <= 2e-5

    def test_normalized_graph_same_solution(self):
        graph, labeled, g, _ = random_epsilon_instance(17)
        tol = 1e-7
        s1 = solve(LabelProblem(graph, labeled, g), tol=tol)
        s2 = solve(LabelProblem(normalize_max_weight(graph), labeled, g), tol=tol)
        assert np.max(np.abs(s2.u - s1.u)) <= 2e-5


class TestComparison:
    def test_ordered_boundaries_give_ordered_solutions(self):
        for seed in range(8):
            graph, labeled, g, rng = random_epsilon_instance(seed + 100)
            bump = rng.uniform(0.0, 1.0, size=g.size)
            p1 = LabelProblem(graph, labeled, g)
            p2 = LabelProblem(graph, labeled, g + bump)
            s1 = solve(p1, tol=1e-7)
            s2 = solve(p2, tol=1e-7)
            assert verify_comparison(p1, p2, s1, s2, tol=1e-5)

    def test_requires_same_graph(self):
        g1, labeled, g, _ = random_epsilon_instance(1, n_max=40)
        g2, labeled2, gv2, _ = random_epsilon_instance(2, n_max=40)
        p1 = LabelProblem(g1, labeled, g)
        p2 = LabelProblem(g2, labeled2, gv2)
        s1 = solve(p1, tol=1e-6)
        s2 = solve(p2, tol=1e-6)
        with pytest.raises(ValueError):
            verify_comparison(p1, p2, s1, s2)

    def test_requires_ordered_labels(self):
        graph, labeled, g, _ = random_epsilon_instance(3, n_max=40)
        p1 = LabelProblem(graph, labeled, g + 1.0)
        p2 = LabelProblem(graph, labeled, g)
        s1 = solve(p1, tol=1e-6)
        s2 = solve(p2, tol=1e-6)
        with pytest.raises(ValueError):
            verify_comparison(p1, p2, s1, s2)


class TestHonesty:
    def test_disconnected_raises_before_iterating(self):
        w = sparse.csr_matrix(([1.0, 1.0, 1.0, 1.0], ([0, 1, 2, 3], [1, 0, 3, 2])), shape=(4, 4))
        g = WeightedGraph(w)
        with pytest.raises(GraphConnectivityError):
            solve(LabelProblem(g, np.array([0]), np.array([1.0])))

    def test_max_iter_reports_nonconvergence(self):
        g = path_graph([1.0] * 30)
        sol = solve(LabelProblem(g, np.array([0, 30]), np.array([0.0, 1.0])),
                    tol=1e-10, max_iter=3)
        assert not sol.converged
        assert sol.iterations == 3
        assert sol.final_residual > 1e-10

    def test_tol_validation(self):
        g = path_graph([1.0])
        with pytest.raises(ValueError):
            solve(LabelProblem(g, np.array([0]), np.array([0.0])), tol=0.0)


class TestProblemValidation:
    def test_empty_labels(self):
        g = path_graph([1.0])
        with pytest.raises(ValueError):
            LabelProblem(g, np.array([], dtype=int), np.array([]))

    def test_duplicate_labels(self):
        g = path_graph([1.0, 1.0])
        with pytest.raises(ValueError):
            LabelProblem(g, np.array([0, 0]), np.array([0.0, 1.0]))

    def test_out_of_range(self):
        g = path_graph([1.0])
        with pytest.raises(IndexError):
            LabelProblem(g, np.array([5]), np.array([0.0]))


class TestInit:
    def test_nearest_label_inside_bounds(self):
        graph, labeled, g, _ = random_epsilon_instance(21, n_max=60)
        sol = solve(LabelProblem(graph, labeled, g), tol=1e-6, init=Init.NEAREST_LABEL)
        assert sol.converged

    def test_zero_init_clamped_into_label_range(self):
        g = path_graph([1.0, 1.0])
        sol = solve(LabelProblem(g, np.array([0, 2]), np.array([2.0, 3.0])),
                    tol=1e-8, init=Init.ZERO)
        assert sol.u.min() >= 2.0 - 1e-9

    def test_u0_shape_validated(self):
        g = path_graph([1.0, 1.0])
        with pytest.raises(ValueError):
            solve(LabelProblem(g, np.array([0, 2]), np.array([0.0, 1.0])), u0=np.zeros(5))

    def test_u0_same_fixed_point(self):
        graph, labeled, g, rng = random_epsilon_instance(31, n_max=60)
        prob = LabelProblem(graph, labeled, g)
        s1 = solve(prob, tol=1e-9)
        s2 = solve(prob, tol=1e-9, u0=rng.uniform(g.min(), g.max(), graph.n_vertices))
        assert np.max(np.abs(s1.u - s2.u)) < 1e-6


class TestDiagnosticsAndExports:
    def test_lipschitz_gradient_cases(self):
        g = path_graph([1.0, 1.0])
        assert lipschitz_gradient(g, np.zeros(3)) == 0.0
        assert lipschitz_gradient(g, np.array([0.0, 0.5, 1.0])) == pytest.approx(0.5)

    def test_solution_exports(self, tmp_path):
        g = path_graph([1.0, 1.0])
        sol = solve(LabelProblem(g, np.array([0, 2]), np.array([0.0, 1.0])), tol=1e-6)
        csv_path = tmp_path / "u.csv"
        save_solution_csv(sol, csv_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "index,u"
        assert len(lines) == 4
        json_path = tmp_path / "diag.json"
        save_diagnostics(sol, json_path)
        import json

        payload = json.loads(json_path.read_text())
        assert payload["converged"] is True
        assert "max_gradient" in payload
