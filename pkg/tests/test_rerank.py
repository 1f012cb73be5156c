import itertools
import math

import numpy as np
import pytest

from fairrerank.core import (
    BudgetExceededError,
    ConfigError,
    GroupReport,
    ProblemBuildError,
    RerankProblem,
    ValidationError,
)
from fairrerank import metrics, rerank
from fairrerank.rerank import (
    build_problem,
    baseline_selection,
    constraint_value,
    dump_problem_lp,
    epsilon_from_baseline,
    finalize,
    selection_objective,
    solve_exact,
    solve_lagrangian,
    solve_oracle,
)

from conftest import make_candidate_set, make_groups, random_problem


def enumerate_optimum(problem, feasibility_tol=1e-9):
    """In-test exhaustive reference, written independently of the solvers:
    walk every combination of per-user K-subsets with plain python sums."""
    users = problem.users
    k = problem.k
    per_user = [
        list(itertools.combinations(range(len(problem.objective[u])), k)) for u in users
    ]
    best = None
    for combo in itertools.product(*per_user):
        obj = 0.0
        gap = 0.0
        for u, slots in zip(users, combo):
            for s in slots:
                obj += problem.objective[u][s]
                gap += problem.fairness_coeffs[u][s]
        if math.isinf(problem.epsilon) or abs(gap) <= problem.epsilon + feasibility_tol:
            if best is None or obj > best[0]:
                best = (obj, combo, gap)
    return best


class TestBuildProblem:
    def test_single_advantaged_user_coefficient(self):
        groups = make_groups(["u1"], ["u2"])
        c1 = make_candidate_set("u1", [(f"i{j:02d}", 1.0 - j * 0.01, j == 0) for j in range(12)],
                                n_relevant_total=4)
        c2 = make_candidate_set("u2", [(f"j{j:02d}", 1.0 - j * 0.01, j == 0) for j in range(12)],
                                n_relevant_total=4)
        problem = build_problem([c1, c2], groups, k=10, epsilon=0.1)
        relevant_coeff = [c for c in problem.fairness_coeffs["u1"] if c != 0]
        assert relevant_coeff == [pytest.approx(2 / 14)]
        assert problem.n_advantaged_evaluated == problem.n_disadvantaged_evaluated == 1

    def test_disadvantaged_coefficients_are_negated(self):
        groups = make_groups(["u1"], ["u2"])
        layout = [(f"i{j}", 1.0 - j * 0.1, j < 2) for j in range(5)]
        c1 = make_candidate_set("u1", layout)
        c2 = make_candidate_set("u2", layout)
        problem = build_problem([c1, c2], groups, k=3, epsilon=0.5)
        assert problem.fairness_coeffs["u2"] == tuple(
            -c for c in problem.fairness_coeffs["u1"]
        )

    def test_infinite_epsilon_flags_unconstrained(self):
        groups = make_groups(["u1"], ["u2"])
        layout = [("a", 0.9, True), ("b", 0.5, False)]
        problem = build_problem(
            [make_candidate_set("u1", layout), make_candidate_set("u2", layout)],
            groups, k=1, epsilon=math.inf,
        )
        assert problem.unconstrained

    def test_too_few_candidates_listed(self):
        groups = make_groups(["u1"], ["u2"])
        c1 = make_candidate_set("u1", [("a", 0.9, True)])
        c2 = make_candidate_set("u2", [("b", 0.9, True), ("c", 0.5, False)])
        with pytest.raises(ProblemBuildError, match="u1"):
            build_problem([c1, c2], groups, k=2, epsilon=0.1)

    def test_user_missing_from_groups(self):
        groups = make_groups(["u1"], ["u2"])
        cands = [make_candidate_set("ghost", [("a", 0.9, True)])]
        with pytest.raises(ProblemBuildError):
            build_problem(cands, groups, k=1, epsilon=0.1)

    def test_one_sided_evaluated_groups_rejected(self):
        groups = make_groups(["u1"], ["u2"])
        with pytest.raises(ProblemBuildError, match="disadvantaged"):
            build_problem(
                [make_candidate_set("u1", [("a", 0.9, True)])], groups, k=1, epsilon=0.1
            )

    def test_payload_roundtrip(self, two_user_problem):
        problem = two_user_problem(0.2)
        again = RerankProblem.from_payload(problem.to_payload())
        assert again.users == problem.users
        assert again.objective == problem.objective
        assert again.fairness_coeffs == problem.fairness_coeffs


class TestTwoUserInstance:
    """The canonical instance, checked against an explicit enumeration."""

    def test_reference_enumeration(self, two_user_problem):
        problem = two_user_problem(0.2)
        obj, combo, gap = enumerate_optimum(problem)
        assert obj == pytest.approx(1.6)
        assert gap == pytest.approx(0.0)

    @pytest.mark.parametrize("mode,solver_fn", [
        ("oracle", solve_oracle),
        ("exact", solve_exact),
        ("lagrangian", solve_lagrangian),
    ])
    def test_moderate_bound_picks_fair_pair(self, two_user_problem, mode, solver_fn):
        solution = solver_fn(two_user_problem(0.2))
        assert solution.objective_value == pytest.approx(1.6)
        assert solution.final_lists == {"u1": ("a",), "u2": ("d",)}
        assert solution.achieved_ugf == pytest.approx(0.0)

    @pytest.mark.parametrize("solver_fn", [solve_oracle, solve_exact, solve_lagrangian])
    def test_unconstrained_takes_top_scores(self, two_user_problem, solver_fn):
        solution = solver_fn(two_user_problem(math.inf))
        assert solution.objective_value == pytest.approx(1.7)
        assert solution.final_lists == {"u1": ("a",), "u2": ("c",)}
        assert solution.achieved_ugf == pytest.approx(1.0)
        assert solution.solver == "passthrough"

    @pytest.mark.parametrize("solver_fn", [solve_oracle, solve_exact])
    def test_zero_bound_still_beats_all_irrelevant(self, two_user_problem, solver_fn):
        solution = solver_fn(two_user_problem(0.0))
        assert solution.objective_value == pytest.approx(1.6)
        assert solution.final_lists == {"u1": ("a",), "u2": ("d",)}


class TestOracle:
    def test_budget_refusal_with_estimate(self):
        groups = make_groups(["u1"], ["u2"])
        layout = [(f"i{j:02d}", 1.0 - 0.01 * j, j % 3 == 0) for j in range(30)]
        cands = [
            make_candidate_set("u1", layout),
            make_candidate_set("u2", [(f"j{j:02d}", 1.0 - 0.01 * j, j % 3 == 0) for j in range(30)]),
        ]
        problem = build_problem(cands, groups, k=10, epsilon=0.1)
        with pytest.raises(BudgetExceededError):
            solve_oracle(problem)

    def test_infeasible_instance_reported(self):
        groups = make_groups(["u1"], ["u2"])
        c1 = make_candidate_set("u1", [("a", 0.9, True), ("b", 0.8, True)], 2)
        c2 = make_candidate_set("u2", [("c", 0.9, False), ("d", 0.8, False), ("e", 0.1, True)], 1)
        problem = build_problem([c1, c2], groups, k=2, epsilon=1e-6)
        oracle = solve_oracle(problem)
        exact = solve_exact(problem)
        assert oracle.status == "infeasible" and exact.status == "infeasible"
        assert not oracle.feasible and not exact.feasible
        assert oracle.best_violation > 0

    def test_matches_reference_enumeration_on_random_instances(self):
        rng = np.random.default_rng(5)
        for trial in range(40):
            eps = [0.0, float(rng.random() * 0.3), math.inf][trial % 3]
            problem = random_problem(rng, eps)
            reference = enumerate_optimum(problem)
            solution = solve_oracle(problem)
            if reference is None:
                assert not solution.feasible
            else:
                assert solution.objective_value == pytest.approx(reference[0], abs=1e-12)


class TestExactSolver:
    def test_oracle_equivalence_random(self):
        rng = np.random.default_rng(17)
        for trial in range(60):
            eps = [0.0, float(rng.random() * 0.3), math.inf][trial % 3]
            problem = random_problem(rng, eps)
            oracle = solve_oracle(problem)
            exact = solve_exact(problem)
            assert oracle.feasible == exact.feasible
            if oracle.feasible:
                assert abs(oracle.objective_value - exact.objective_value) <= 1e-9
                assert exact.optimality_gap <= 1e-6

    def test_constraint_vacuous_when_nothing_relevant_anywhere(self):
        groups = make_groups(["u1"], ["u2"])
        c1 = make_candidate_set(
            "u1", [(f"i{j}", 1.0 - 0.1 * j, False) for j in range(4)], n_relevant_total=2
        )
        c2 = make_candidate_set(
            "u2", [(f"j{j}", 1.0 - 0.1 * j, False) for j in range(4)], n_relevant_total=2
        )
        problem = build_problem([c1, c2], groups, k=2, epsilon=0.0)
        solution = solve_exact(problem)
        assert solution.selection == baseline_selection(problem)
        assert solution.achieved_ugf == 0.0

    def test_epsilon_monotonicity(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            problem_inf = random_problem(rng, math.inf)
            objectives = []
            for eps in [math.inf, 0.3, 0.15, 0.05, 0.0]:
                problem = build_problem(
                    list(problem_inf.candidate_sets.values()),
                    problem_inf.groups,
                    problem_inf.k,
                    eps,
                )
                solution = solve_exact(problem)
                objectives.append(
                    solution.objective_value if solution.feasible else -math.inf
                )
            assert all(a >= b - 1e-12 for a, b in zip(objectives, objectives[1:]))


class TestLagrangian:
    def test_multiplier_gap_curve_is_monotone(self):
        """The repriced selections' gap never increases with the multiplier."""
        rng = np.random.default_rng(77)
        for _ in range(10):
            problem = random_problem(rng, 0.1, max_users=4, max_candidates=5, max_k=2)
            lams = np.linspace(-4.0, 4.0, 41)
            gaps = [
                constraint_value(problem, rerank._adjusted_selection(problem, lam))
                for lam in lams
            ]
            assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))

    def test_always_feasible_or_flagged(self):
        rng = np.random.default_rng(4)
        for trial in range(60):
            eps = [0.0, float(rng.random() * 0.2), math.inf][trial % 3]
            problem = random_problem(rng, eps)
            solution = solve_lagrangian(problem)
            if solution.feasible:
                gap = constraint_value(problem, solution.selection)
                assert abs(gap) <= problem.epsilon + 1e-9 or problem.unconstrained
            else:
                assert solution.status == "infeasibility_suspected"
                assert solution.best_violation is not None

    def test_dominance_chain(self):
        """heuristic objective <= exact objective <= heuristic dual bound."""
        rng = np.random.default_rng(13)
        checked = 0
        for trial in range(60):
            eps = [0.0, float(rng.random() * 0.3)][trial % 2]
            problem = random_problem(rng, eps)
            heur = solve_lagrangian(problem)
            exact = solve_exact(problem)
            if not (heur.feasible and exact.feasible):
                continue
            checked += 1
            assert heur.objective_value <= exact.objective_value + 1e-9
            assert exact.objective_value <= heur.dual_bound + 1e-9
        assert checked > 20

    def test_all_zero_coefficients_reduce_to_top_k(self):
        groups = make_groups(["u1"], ["u2"])
        c1 = make_candidate_set(
            "u1", [(f"i{j}", 1.0 - 0.1 * j, False) for j in range(4)], n_relevant_total=1
        )
        c2 = make_candidate_set(
            "u2", [(f"j{j}", 1.0 - 0.1 * j, False) for j in range(4)], n_relevant_total=1
        )
        problem = build_problem([c1, c2], groups, k=2, epsilon=0.01)
        solution = solve_lagrangian(problem)
        assert solution.selection == baseline_selection(problem)
        assert solution.status == "optimal"


class TestIdentityAtInfiniteEpsilon:
    def test_lists_equal_baseline_top_k(self):
        rng = np.random.default_rng(29)
        for _ in range(25):
            problem = random_problem(rng, math.inf)
            for solver_fn in (solve_exact, solve_lagrangian):
                solution = solver_fn(problem)
                for u in problem.users:
                    assert solution.final_lists[u] == problem.candidate_sets[u].top_k_items(
                        problem.k
                    )


class TestFinalize:
    def test_orders_by_original_score(self, two_user_problem):
        problem = two_user_problem(math.inf)
        solution = finalize(problem, {"u1": (1,), "u2": (1,)}, solver="exact")
        assert solution.final_lists == {"u1": ("b",), "u2": ("d",)}

    def test_selected_items_sorted_desc(self):
        groups = make_groups(["u1"], ["u2"])
        c1 = make_candidate_set(
            "u1", [("a", 0.7, False), ("b", 0.9, True), ("c", 0.1, False)], 1
        )
        c2 = make_candidate_set(
            "u2", [("x", 0.6, True), ("y", 0.2, False), ("z", 0.4, False)], 1
        )
        problem = build_problem([c1, c2], groups, k=2, epsilon=math.inf)
        solution = finalize(problem, {"u1": (2, 0), "u2": (0, 1)}, solver="exact")
        # u1 slots 0,2 = items b (0.9), c (0.1); u2 slots 0,1 = x (0.6), z (0.4)
        assert solution.final_lists["u1"] == ("b", "c")
        assert solution.final_lists["u2"] == ("x", "z")

    def test_cardinality_violation_rejected(self, two_user_problem):
        problem = two_user_problem(0.2)
        with pytest.raises(ValidationError):
            finalize(problem, {"u1": (0, 1), "u2": (0,)}, solver="exact")

    def test_achieved_gap_matches_independent_metrics_computation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            problem = random_problem(rng, math.inf)
            solution = solve_exact(problem)
            per_user = {
                u: metrics.f1_at_k(
                    solution.final_lists[u],
                    problem.candidate_sets[u].relevant_items,
                    problem.k,
                    problem.candidate_sets[u].n_relevant_total,
                )
                for u in problem.users
            }
            report = metrics.group_report(per_user, problem.groups, "F1", problem.k)
            assert solution.achieved_ugf == pytest.approx(report.ugf, abs=1e-12)


class TestEpsilonFromBaseline:
    def report(self, ugf):
        return GroupReport("F1", 10, 20.0 + ugf / 2, 20.0 + ugf, 20.0, ugf, 10, 100)

    def test_half_of_baseline_gap(self):
        assert epsilon_from_baseline(self.report(23.51), 0.5) == pytest.approx(11.755)

    def test_zero_factor(self):
        assert epsilon_from_baseline(self.report(23.51), 0.0) == 0.0

    def test_unit_factor_keeps_baseline_feasible(self):
        assert epsilon_from_baseline(self.report(8.2), 1.0) == pytest.approx(8.2)

    def test_negative_factor_rejected(self):
        with pytest.raises(ConfigError):
            epsilon_from_baseline(self.report(5.0), -0.1)


class TestProblemDump:
    def test_lp_format_smoke(self, two_user_problem):
        text = dump_problem_lp(two_user_problem(0.2))
        assert "Maximize" in text and "Subject To" in text and "Binary" in text
        assert " card_0: x_0_0 + x_0_1 = 1" in text
        assert "fair_hi" in text and "fair_lo" in text

    def test_unconstrained_dump_has_no_fairness_rows(self, two_user_problem):
        text = dump_problem_lp(two_user_problem(math.inf))
        assert "fair_hi" not in text


class TestSelectionHelpers:
    def test_objective_and_constraint_sums(self, two_user_problem):
        problem = two_user_problem(0.2)
        sel = {"u1": (0,), "u2": (1,)}
        assert selection_objective(problem, sel) == pytest.approx(1.6)
        assert constraint_value(problem, sel) == pytest.approx(0.0)
