"""Fairness-constrained top-K re-selection.

The problem: pick exactly K of each user's N candidates so the summed
preference score is maximal while the gap between the advantaged and
disadvantaged groups' mean F1@K stays within epsilon. Because F1@K is
linear in the selection indicators for fixed K, the gap bound becomes a
single two-sided linear constraint coupling otherwise independent
per-user selections.

Three solvers share that structure:

* ``solve_oracle``  -- exhaustive enumeration over all per-user K-subsets;
  the ground-truth verifier for the others, deliberately naive.
* ``solve_exact``   -- branch and bound over per-user hit counts. For a
  fixed number of relevant items selected, the best within-class picks are
  the top-scored ones, so the search space collapses from K-subsets to hit
  counts; bounds come from the Lagrangian dual of the coupling constraint,
  which separates into per-user maximizations.
* ``solve_lagrangian`` -- bisection on the scalar multiplier: each trial
  multiplier reprices candidates and reduces the problem to per-user top-K
  picks; the coupled gap is monotone in the multiplier, and a local
  swap-repair pass absorbs the discreteness left by bisection.

Feasibility everywhere means |gap| <= epsilon + feasibility_tol; the
strict inequality of the underlying formulation is meaningless under
floating point.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import metrics
from .core import (
    BudgetExceededError,
    CandidateSet,
    ConfigError,
    GroupAssignment,
    GroupReport,
    ProblemBuildError,
    RerankProblem,
    RerankSolution,
    STATUS_FEASIBLE,
    STATUS_INFEASIBLE,
    STATUS_INFEASIBLE_SUSPECTED,
    STATUS_OPTIMAL,
    STATUS_TIME_LIMIT,
    TimeLimitError,
    UnknownIdError,
    ValidationError,
)

ORACLE_BUDGET = 10**6

# Absolute-noise guard used when pruning branch-and-bound nodes; keeps the
# incumbent provably within ~1e-12 relative of the true optimum, far inside
# the 1e-9 equivalence the oracle cross-check demands.
_PRUNE_SLACK = 1e-12


@dataclass(frozen=True)
class LagrangianConfig:
    max_bisection_iters: int = 64
    multiplier_lo: float = -1e6
    multiplier_hi: float = 1e6

    def __post_init__(self):
        if self.max_bisection_iters < 1:
            raise ConfigError("max_bisection_iters must be >= 1")
        if not (self.multiplier_lo < 0 < self.multiplier_hi):
            raise ConfigError("multiplier bounds must straddle zero")


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver settings.

    ``gap_tol`` is the relative optimality gap under which a solution is
    labelled optimal; the exact solver always searches until exhaustion
    (or ``time_limit``), so tightening it never changes the answer, only
    the label.
    """

    mode: str = "lagrangian"
    feasibility_tol: float = 1e-9
    gap_tol: float = 1e-6
    time_limit: float = 300.0
    lagrangian: LagrangianConfig = field(default_factory=LagrangianConfig)

    def __post_init__(self):
        if self.mode not in ("oracle", "exact", "lagrangian"):
            raise ConfigError(f"unknown solver mode {self.mode!r}")
        if self.feasibility_tol <= 0:
            raise ConfigError("feasibility_tol must be > 0")
        if self.gap_tol <= 0:
            raise ConfigError("gap_tol must be > 0")
        if self.time_limit <= 0:
            raise ConfigError("time_limit must be > 0")


def build_problem(
    cands: Iterable[CandidateSet],
    groups: GroupAssignment,
    k: int,
    epsilon: float,
) -> RerankProblem:
    """Assemble the selection problem from candidate pools and groups.

    Fairness coefficients follow the exact F1 linearization, signed by
    group membership and averaged over the *evaluated* members of each
    group, so that the constrained quantity equals the reported gap
    exactly. Users with fewer than K candidates are rejected.
    """
    if k < 1:
        raise ProblemBuildError(f"k must be >= 1, got {k}")
    if not (epsilon >= 0.0) and not math.isinf(epsilon):
        raise ProblemBuildError(f"epsilon must be >= 0 or infinity, got {epsilon}")
    by_user: dict[str, CandidateSet] = {}
    for cand in cands:
        if cand.user_id in by_user:
            raise ProblemBuildError(f"duplicate candidate set for user {cand.user_id!r}")
        by_user[cand.user_id] = cand
    if not by_user:
        raise ProblemBuildError("no candidate sets")
    users = tuple(sorted(by_user))

    too_small = [u for u in users if by_user[u].n_candidates < k]
    if too_small:
        raise ProblemBuildError(
            f"{len(too_small)} users have fewer than k={k} candidates: {too_small[:10]}"
        )
    try:
        signs = {u: groups.sign(u) for u in users}
    except UnknownIdError as exc:
        raise ProblemBuildError(str(exc)) from None

    n_adv = sum(1 for u in users if signs[u] > 0)
    n_dis = len(users) - n_adv
    if n_adv == 0 or n_dis == 0:
        empty = "advantaged" if n_adv == 0 else "disadvantaged"
        raise ProblemBuildError(f"no evaluated users in the {empty} group; gap is undefined")

    objective: dict[str, tuple[float, ...]] = {}
    coeffs: dict[str, tuple[float, ...]] = {}
    for u in users:
        cand = by_user[u]
        group_size = n_adv if signs[u] > 0 else n_dis
        per_hit = signs[u] * (2.0 / (k + cand.n_relevant_total)) / group_size
        objective[u] = tuple(c.score for c in cand.candidates)
        coeffs[u] = tuple(per_hit if c.relevant else 0.0 for c in cand.candidates)
    return RerankProblem(
        users=users,
        groups=groups,
        k=k,
        epsilon=float(epsilon),
        candidate_sets=by_user,
        objective=objective,
        fairness_coeffs=coeffs,
        n_advantaged_evaluated=n_adv,
        n_disadvantaged_evaluated=n_dis,
    )


def baseline_selection(problem: RerankProblem) -> dict[str, tuple[int, ...]]:
    """The unconstrained optimum: each user's top-K slots by score."""
    return {u: tuple(range(problem.k)) for u in problem.users}


def constraint_value(problem: RerankProblem, selection: Mapping[str, Sequence[int]]) -> float:
    """Signed group gap of a selection (sum of fairness coefficients)."""
    total = 0.0
    for u in problem.users:
        c = problem.fairness_coeffs[u]
        for slot in selection[u]:
            total += c[slot]
    return total


def selection_objective(problem: RerankProblem, selection: Mapping[str, Sequence[int]]) -> float:
    """Canonical objective summation (users sorted, slots ascending)."""
    total = 0.0
    for u in problem.users:
        s = problem.objective[u]
        for slot in sorted(selection[u]):
            total += s[slot]
    return total


def finalize(
    problem: RerankProblem,
    selection: Mapping[str, Sequence[int]],
    *,
    solver: str,
    status: str = STATUS_FEASIBLE,
    optimality_gap: float = 0.0,
    wall_time: float = 0.0,
    dual_bound: float | None = None,
    nodes: int = 0,
    best_violation: float | None = None,
) -> RerankSolution:
    """Order each user's selected items by their original score and
    recompute the achieved gap from scratch through the metrics module
    (independent of any solver bookkeeping)."""
    final_lists: dict[str, tuple[str, ...]] = {}
    for u in problem.users:
        slots = tuple(sorted(selection[u]))
        if len(slots) != problem.k or len(set(slots)) != problem.k:
            raise ValidationError(
                f"user {u!r} has {len(slots)} selected slots, expected exactly {problem.k}"
            )
        cand = problem.candidate_sets[u]
        chosen = [cand.candidates[s] for s in slots]
        chosen.sort(key=lambda c: (-c.score, c.item_id))
        final_lists[u] = tuple(c.item_id for c in chosen)
    per_user = metrics.per_user_f1(final_lists, problem.candidate_sets, problem.k)
    report = metrics.group_report(per_user, problem.groups, metrics.METRIC_F1, problem.k)
    return RerankSolution(
        selection={u: tuple(sorted(selection[u])) for u in problem.users},
        final_lists=final_lists,
        objective_value=selection_objective(problem, selection),
        achieved_ugf=report.ugf,
        solver=solver,
        status=status,
        optimality_gap=optimality_gap,
        wall_time=wall_time,
        dual_bound=dual_bound,
        nodes=nodes,
        best_violation=best_violation,
    )


def _infeasible_solution(
    solver: str, status: str, wall_time: float, best_violation: float | None, nodes: int = 0
) -> RerankSolution:
    return RerankSolution(
        selection={},
        final_lists={},
        objective_value=float("nan"),
        achieved_ugf=float("nan"),
        solver=solver,
        status=status,
        optimality_gap=float("inf"),
        wall_time=wall_time,
        dual_bound=None,
        nodes=nodes,
        best_violation=best_violation,
    )


def _passthrough(problem: RerankProblem, wall_start: float) -> RerankSolution:
    return finalize(
        problem,
        baseline_selection(problem),
        solver="passthrough",
        status=STATUS_OPTIMAL,
        optimality_gap=0.0,
        wall_time=time.perf_counter() - wall_start,
    )


def epsilon_from_baseline(report: GroupReport, factor: float = 0.5) -> float:
    """Constraint bound derived from a baseline report: factor times the
    baseline gap (the experiment convention is factor 0.5)."""
    if factor < 0:
        raise ConfigError(f"factor must be >= 0, got {factor}")
    if not (report.ugf >= 0):
        raise ValidationError("baseline report has a negative gap")
    return factor * report.ugf


def solve(problem: RerankProblem, cfg: SolverConfig | None = None) -> RerankSolution:
    cfg = cfg or SolverConfig()
    if cfg.mode == "oracle":
        return solve_oracle(problem, feasibility_tol=cfg.feasibility_tol)
    if cfg.mode == "exact":
        return solve_exact(problem, cfg)
    return solve_lagrangian(problem, cfg)


# ---------------------------------------------------------------------------
# Oracle: exhaustive enumeration.
# ---------------------------------------------------------------------------


def oracle_search_space(problem: RerankProblem) -> float:
    size = 1.0
    for u in problem.users:
        size *= math.comb(problem.candidate_sets[u].n_candidates, problem.k)
        if size > 1e18:
            break
    return size


def solve_oracle(
    problem: RerankProblem,
    feasibility_tol: float = 1e-9,
    budget: int = ORACLE_BUDGET,
) -> RerankSolution:
    """Enumerate every combination of per-user K-subsets.

    Returns the feasible combination with the highest objective, ties
    resolved toward the lexicographically smallest selection (first in
    enumeration order). Refuses instances whose search space exceeds
    ``budget``.
    """
    t0 = time.perf_counter()
    if problem.unconstrained:
        return _passthrough(problem, t0)
    size = oracle_search_space(problem)
    if size > budget:
        raise BudgetExceededError(
            f"search space has ~{size:.3g} combinations, budget is {budget}"
        )
    eps_eff = problem.epsilon + feasibility_tol
    scores = [problem.objective[u] for u in problem.users]
    coeffs = [problem.fairness_coeffs[u] for u in problem.users]
    k = problem.k
    per_user = [
        list(itertools.combinations(range(len(scores[i])), k))
        for i in range(len(problem.users))
    ]
    best_obj = -math.inf
    best_combo = None
    best_violation = math.inf
    for combo in itertools.product(*per_user):
        gap = 0.0
        obj = 0.0
        for i, slots in enumerate(combo):
            s, c = scores[i], coeffs[i]
            for slot in slots:
                gap += c[slot]
                obj += s[slot]
        violation = abs(gap) - eps_eff
        best_violation = min(best_violation, max(0.0, violation))
        if abs(gap) <= eps_eff and obj > best_obj:
            best_obj = obj
            best_combo = combo
    wall = time.perf_counter() - t0
    if best_combo is None:
        return _infeasible_solution("oracle", STATUS_INFEASIBLE, wall, best_violation)
    selection = {u: best_combo[i] for i, u in enumerate(problem.users)}
    return finalize(
        problem,
        selection,
        solver="oracle",
        status=STATUS_OPTIMAL,
        optimality_gap=0.0,
        wall_time=wall,
    )


# ---------------------------------------------------------------------------
# Hit-count reduction shared by the exact solver and the repair pass.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Reduction:
    """Per-user hit-count view of the problem.

    For user index i, choosing h relevant items (h in [lo[i], hi[i]])
    yields best objective value[i][h] (top-h relevant plus top-(K-h)
    irrelevant scores) and contributes w[i] * h to the gap. ``strata``
    group users by (sign, total relevant count): within a stratum every
    hit carries the same exact weight.
    """

    users: tuple[str, ...]
    w: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray  # n x (k+1), -inf outside [lo, hi]
    rel_slots: tuple[tuple[int, ...], ...]
    irr_slots: tuple[tuple[int, ...], ...]
    k: int
    strata: Mapping[tuple[int, int], tuple[int, ...]]
    n_advantaged: int
    n_disadvantaged: int


def _reduce(problem: RerankProblem) -> _Reduction:
    k = problem.k
    n = len(problem.users)
    w = np.zeros(n)
    lo = np.zeros(n, dtype=np.int64)
    hi = np.zeros(n, dtype=np.int64)
    values = np.full((n, k + 1), -np.inf)
    rel_all: list[tuple[int, ...]] = []
    irr_all: list[tuple[int, ...]] = []
    strata: dict[tuple[int, int], list[int]] = {}
    for i, u in enumerate(problem.users):
        scores = problem.objective[u]
        coeffs = problem.fairness_coeffs[u]
        rel = tuple(s for s, c in enumerate(coeffs) if c != 0.0)
        irr = tuple(s for s, c in enumerate(coeffs) if c == 0.0)
        rel_all.append(rel)
        irr_all.append(irr)
        # Slot order is score-descending already, so class sublists are too.
        rel_prefix = np.concatenate(([0.0], np.cumsum([scores[s] for s in rel])))
        irr_prefix = np.concatenate(([0.0], np.cumsum([scores[s] for s in irr])))
        lo[i] = max(0, k - len(irr))
        hi[i] = min(k, len(rel))
        w[i] = coeffs[rel[0]] if rel else 0.0
        if rel:
            sign = 1 if w[i] > 0 else -1
            strata.setdefault((sign, problem.candidate_sets[u].n_relevant_total), []).append(i)
        for h in range(lo[i], hi[i] + 1):
            values[i, h] = rel_prefix[h] + irr_prefix[k - h]
    return _Reduction(
        users=problem.users,
        w=w,
        lo=lo,
        hi=hi,
        values=values,
        rel_slots=tuple(rel_all),
        irr_slots=tuple(irr_all),
        k=k,
        strata={key: tuple(v) for key, v in strata.items()},
        n_advantaged=problem.n_advantaged_evaluated,
        n_disadvantaged=problem.n_disadvantaged_evaluated,
    )


def _selection_from_h(red: _Reduction, h: np.ndarray) -> dict[str, tuple[int, ...]]:
    out = {}
    for i, u in enumerate(red.users):
        hits = int(h[i])
        slots = red.rel_slots[i][:hits] + red.irr_slots[i][: red.k - hits]
        out[u] = tuple(sorted(slots))
    return out


def _dual_point(
    red: _Reduction,
    lo: np.ndarray,
    hi: np.ndarray,
    lam: float,
    eps_eff: float,
    hgrid: np.ndarray,
) -> tuple[float, float, float, np.ndarray]:
    """Evaluate the dual at one multiplier over the node's hit-count box.

    Returns (dual value, gap of the maximizing hit counts, raw objective
    of those hit counts, the hit counts themselves). Any multiplier gives
    a valid upper bound on the constrained optimum within the box.
    """
    valid = (hgrid >= lo[:, None]) & (hgrid <= hi[:, None]) & np.isfinite(red.values)
    adjusted = np.where(valid, red.values - lam * red.w[:, None] * hgrid, -np.inf)
    h = np.argmax(adjusted, axis=1)
    rows = np.arange(len(h))
    dual = float(adjusted[rows, h].sum()) + abs(lam) * eps_eff
    gap_value = float((red.w * h).sum())
    obj = float(red.values[rows, h].sum())
    return dual, gap_value, obj, h.astype(np.int64)


def _anchor_points(
    red: _Reduction, lo: np.ndarray, hi: np.ndarray
) -> tuple[np.ndarray, ...]:
    """Cheap always-valid hit-count corners of a box: both bounds and the
    two gap extremes. With full candidate pools the all-lower corner is
    all-zero hits, whose gap is exactly 0.0, so a feasible incumbent
    exists for every epsilon."""
    gap_min = np.where(red.w > 0, lo, hi)
    gap_max = np.where(red.w > 0, hi, lo)
    return (lo.copy(), hi.copy(), gap_min.astype(np.int64), gap_max.astype(np.int64))


def _repair(
    red: _Reduction,
    h: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    eps_eff: float,
    max_moves: int | None = None,
) -> np.ndarray | None:
    """Single-step exchange repair: nudge per-user hit counts until the
    gap lands inside the band, preferring the cheapest objective loss per
    unit of progress. Returns None when stuck."""
    h = h.copy()
    w = red.w
    n = len(h)
    rows = np.arange(n)
    k = red.values.shape[1] - 1
    gap = float((w * h).sum())
    if max_moves is None:
        max_moves = min(int(np.sum(hi - lo)) * 4 + 64, 20000)
    for _ in range(max_moves):
        if abs(gap) <= eps_eff:
            return h
        can_up = (h < hi) & (w != 0.0)
        can_dn = (h > lo) & (w != 0.0)
        dv_up = np.where(can_up, red.values[rows, np.minimum(h + 1, k)] - red.values[rows, h], -np.inf)
        dv_dn = np.where(can_dn, red.values[rows, np.maximum(h - 1, 0)] - red.values[rows, h], -np.inf)
        new_up = np.abs(gap + w)
        new_dn = np.abs(gap - w)
        prog_up = can_up & (new_up < abs(gap) - 1e-15)
        prog_dn = can_dn & (new_dn < abs(gap) - 1e-15)

        def pick(mask_up, mask_dn, score_up, score_dn):
            # Deterministic winner: best score, then user index, then the
            # down direction on full ties.
            best = None
            for mask, score, direction in ((mask_dn, score_dn, -1), (mask_up, score_up, 1)):
                if not np.any(mask):
                    continue
                masked = np.where(mask, score, np.inf)
                i = int(np.argmin(masked))
                key = (float(masked[i]), i, direction)
                if best is None or key < best:
                    best = key
            return best

        landing = pick(
            prog_up & (new_up <= eps_eff),
            prog_dn & (new_dn <= eps_eff),
            -dv_up,
            -dv_dn,
        )
        if landing is None:
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio_up = np.where(prog_up, -dv_up / (abs(gap) - new_up), np.inf)
                ratio_dn = np.where(prog_dn, -dv_dn / (abs(gap) - new_dn), np.inf)
            landing = pick(prog_up, prog_dn, ratio_up, ratio_dn)
        if landing is None:
            return None
        _, i, direction = landing
        h[i] += direction
        gap += direction * w[i]
    return h if abs(gap) <= eps_eff else None


def _parity_improve(
    red: _Reduction,
    h: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    eps_eff: float,
    max_rounds: int = 3000,
    max_package: int = 1024,
) -> np.ndarray:
    """Raise the objective of a feasible point with gap-neutral packages.

    All hits inside a (group, relevant-count) stratum carry the same gap
    weight 2 / ((K + T) * group size), so integer hit bundles between two
    strata in the exact inverse ratio of their weights cancel: x hits one
    way in stratum 1 plus y hits in stratum 2 with x * scale2 = y * scale1
    leave the gap unchanged up to float noise. Greedy over positive-gain
    packages; this is what makes good solutions possible near epsilon = 0,
    where single swaps cannot land inside the band.
    """
    h = h.copy()
    rows = np.arange(len(h))
    k = red.values.shape[1] - 1
    gap = float((red.w * h).sum())
    if abs(gap) > eps_eff:
        return h
    keys = sorted(red.strata)
    scales = {
        (sign, t): (k + t) * (red.n_advantaged if sign > 0 else red.n_disadvantaged)
        for sign, t in keys
    }
    members = {key: np.array(red.strata[key], dtype=np.int64) for key in keys}

    for _ in range(max_rounds):
        up = np.where(h < hi, red.values[rows, np.minimum(h + 1, k)] - red.values[rows, h], -np.inf)
        dn = np.where(h > lo, red.values[rows, np.maximum(h - 1, 0)] - red.values[rows, h], -np.inf)
        # Per stratum: every available hit step (users may contribute several;
        # per-user values are concave in the hit count, so taking the x best
        # step gains always yields a consistent multi-step assignment),
        # ordered best first, with prefix sums.
        tops: dict[tuple, dict[str, tuple[np.ndarray, np.ndarray]]] = {}
        for key in keys:
            m = members[key]
            entry = {}
            for name, sign in (("up", 1), ("dn", -1)):
                step_users: list[np.ndarray] = []
                step_gains: list[np.ndarray] = []
                for i in m:
                    i = int(i)
                    if sign > 0:
                        gains = red.values[i, h[i] + 1 : hi[i] + 1] - red.values[i, h[i] : hi[i]]
                    else:
                        gains = red.values[i, lo[i] : h[i]][::-1] - red.values[i, lo[i] + 1 : h[i] + 1][::-1]
                    if len(gains):
                        step_users.append(np.full(len(gains), i, dtype=np.int64))
                        step_gains.append(gains)
                if step_users:
                    users_flat = np.concatenate(step_users)
                    gains_flat = np.concatenate(step_gains)
                    order = np.lexsort((users_flat, -gains_flat))
                    entry[name] = (users_flat[order], np.cumsum(gains_flat[order]))
                else:
                    entry[name] = (np.empty(0, dtype=np.int64), np.empty(0))
            tops[key] = entry

        best_gain = 1e-12 * max(1.0, abs(float(red.values[rows, h].sum())))
        best_move: list[tuple[np.ndarray, int]] | None = None

        def offer(gain: float, move: list[tuple[np.ndarray, int]]):
            nonlocal best_gain, best_move
            if gain > best_gain:
                best_gain = gain
                best_move = move

        def first_step_excluding(users_arr, pre, excluded):
            """Position and gain of the best step owned by anyone but
            ``excluded``; by sort stability that position is its owner's
            first step."""
            differs = users_arr != excluded
            if not np.any(differs):
                return None
            idx = int(np.argmax(differs))
            gain = float(pre[idx] - (pre[idx - 1] if idx else 0.0))
            return idx, gain

        for a, key1 in enumerate(keys):
            for key2 in keys[a:]:
                if key1 == key2:
                    # Exchange one hit between two distinct users of the stratum.
                    users_up, pre_up = tops[key1]["up"]
                    users_dn, pre_dn = tops[key1]["dn"]
                    if len(users_up) == 0 or len(users_dn) == 0:
                        continue
                    if users_up[0] != users_dn[0]:
                        offer(
                            float(pre_up[0] + pre_dn[0]),
                            [(users_up[:1], 1), (users_dn[:1], -1)],
                        )
                    else:
                        alt_up = first_step_excluding(users_up, pre_up, users_dn[0])
                        if alt_up is not None:
                            idx, gain = alt_up
                            offer(
                                gain + float(pre_dn[0]),
                                [(users_up[idx : idx + 1], 1), (users_dn[:1], -1)],
                            )
                        alt_dn = first_step_excluding(users_dn, pre_dn, users_up[0])
                        if alt_dn is not None:
                            idx, gain = alt_dn
                            offer(
                                float(pre_up[0]) + gain,
                                [(users_up[:1], 1), (users_dn[idx : idx + 1], -1)],
                            )
                    continue
                g = math.gcd(scales[key1], scales[key2])
                x = scales[key1] // g
                y = scales[key2] // g
                if x > max_package or y > max_package:
                    continue
                same_sign = key1[0] == key2[0]
                combos = (
                    (("up", "dn"), ("dn", "up")) if same_sign else (("up", "up"), ("dn", "dn"))
                )
                for d1, d2 in combos:
                    users1, pre1 = tops[key1][d1]
                    users2, pre2 = tops[key2][d2]
                    if len(users1) < x or len(users2) < y:
                        continue
                    offer(
                        float(pre1[x - 1] + pre2[y - 1]),
                        [
                            (users1[:x], 1 if d1 == "up" else -1),
                            (users2[:y], 1 if d2 == "up" else -1),
                        ],
                    )

        if best_move is None:
            return h
        trial = h.copy()
        for users, step in best_move:
            np.add.at(trial, users, step)
        new_gap = float((red.w * trial).sum())
        if abs(new_gap) > eps_eff:
            return h
        h = trial
        gap = new_gap
    return h


def _bound_search(
    red: _Reduction,
    lo: np.ndarray,
    hi: np.ndarray,
    eps_eff: float,
    lag_cfg: LagrangianConfig,
    hgrid: np.ndarray,
) -> tuple[float, np.ndarray | None, float, np.ndarray]:
    """Dual bound over a hit-count box, plus the best feasible hit counts
    discovered along the way.

    Returns (bound, best feasible h or None, best feasible objective,
    dual h at the final multiplier, for branching guidance).
    """
    dual0, gap0, obj0, h0 = _dual_point(red, lo, hi, 0.0, eps_eff, hgrid)
    best_bound = dual0
    best_h: np.ndarray | None = None
    best_obj = -math.inf
    if abs(gap0) <= eps_eff:
        return dual0, h0, obj0, h0

    direction = 1.0 if gap0 > eps_eff else -1.0
    crossed = (lambda g: g <= eps_eff) if direction > 0 else (lambda g: g >= -eps_eff)
    limit = lag_cfg.multiplier_hi if direction > 0 else -lag_cfg.multiplier_lo

    def consider(gap_value: float, obj: float, h: np.ndarray):
        nonlocal best_h, best_obj
        if abs(gap_value) <= eps_eff and obj > best_obj:
            best_obj = obj
            best_h = h

    lam_a = 0.0
    lam_b = direction
    last = None
    for _ in range(80):
        dual, gap_value, obj, h = _dual_point(red, lo, hi, lam_b, eps_eff, hgrid)
        best_bound = min(best_bound, dual)
        consider(gap_value, obj, h)
        last = h
        if crossed(gap_value):
            break
        if abs(lam_b) >= limit:
            return best_bound, best_h, best_obj, h
        lam_a = lam_b
        lam_b = direction * min(abs(lam_b) * 2.0, limit)
    else:
        return best_bound, best_h, best_obj, last

    for _ in range(lag_cfg.max_bisection_iters):
        mid = 0.5 * (lam_a + lam_b)
        if mid == lam_a or mid == lam_b:
            break
        dual, gap_value, obj, h = _dual_point(red, lo, hi, mid, eps_eff, hgrid)
        best_bound = min(best_bound, dual)
        consider(gap_value, obj, h)
        last = h
        if crossed(gap_value):
            lam_b = mid
        else:
            lam_a = mid
    return best_bound, best_h, best_obj, last


def solve_exact(problem: RerankProblem, cfg: SolverConfig | None = None) -> RerankSolution:
    """Branch and bound over per-user hit counts, with dual bounds from the
    dualized coupling constraint.

    Runs until the tree is exhausted (provably optimal) or the time limit
    is hit (incumbent plus its gap); certifies infeasibility when no leaf
    satisfies the band. Deterministic: best-bound node order with a
    sequence-number tie-break.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit
    if problem.unconstrained:
        return _passthrough(problem, t0)
    red = _reduce(problem)
    eps_eff = problem.epsilon + cfg.feasibility_tol
    hgrid = np.arange(problem.k + 1)

    incumbent_h: np.ndarray | None = None
    incumbent_obj = -math.inf
    best_violation = math.inf
    nodes = 0

    def consider_h(h: np.ndarray | None, obj: float):
        nonlocal incumbent_h, incumbent_obj
        if h is not None and obj > incumbent_obj:
            incumbent_obj = obj
            incumbent_h = h

    def interval_gap(lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
        contrib_lo = np.minimum(red.w * lo, red.w * hi)
        contrib_hi = np.maximum(red.w * lo, red.w * hi)
        return float(contrib_lo.sum()), float(contrib_hi.sum())

    def evaluate(lo: np.ndarray, hi: np.ndarray, root: bool = False):
        nonlocal best_violation
        gmin, gmax = interval_gap(lo, hi)
        if gmin > eps_eff:
            best_violation = min(best_violation, gmin - eps_eff)
            return None
        if gmax < -eps_eff:
            best_violation = min(best_violation, -eps_eff - gmax)
            return None
        bound, feas_h, feas_obj, dual_h = _bound_search(
            red, lo, hi, eps_eff, cfg.lagrangian, hgrid
        )
        consider_h(feas_h, feas_obj)
        rows = np.arange(len(dual_h))
        candidates = [_repair(red, dual_h, lo, hi, eps_eff)]
        candidates.extend(
            a for a in _anchor_points(red, lo, hi) if abs(float((red.w * a).sum())) <= eps_eff
        )
        for h in candidates:
            if h is None:
                continue
            if root:
                h = _parity_improve(red, h, lo, hi, eps_eff)
            consider_h(h, float(red.values[rows, h].sum()))
        return bound, dual_h

    root = evaluate(red.lo, red.hi, root=True)
    heap: list[tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = []
    seq = 0
    if root is not None:
        heapq.heappush(heap, (-root[0], seq, red.lo.copy(), red.hi.copy(), root[1]))
    timed_out = False
    final_bound = root[0] if root is not None else -math.inf

    while heap:
        if time.perf_counter() > deadline:
            timed_out = True
            final_bound = -heap[0][0]
            break
        neg_bound, _, lo, hi, dual_h = heapq.heappop(heap)
        bound = -neg_bound
        final_bound = bound
        slack = _PRUNE_SLACK * max(1.0, abs(incumbent_obj))
        if incumbent_h is not None and bound <= incumbent_obj + slack:
            final_bound = bound
            break
        nodes += 1
        free = hi - lo
        influence = np.abs(red.w) * free
        if not np.any(free > 0):
            continue  # fully fixed; its selection was already considered
        i = int(np.argmax(influence)) if float(influence.max()) > 0 else int(np.argmax(free))
        split = int(np.clip(dual_h[i], lo[i], hi[i]))
        if split == hi[i]:
            split -= 1
        for child_lo_i, child_hi_i in ((lo[i], split), (split + 1, hi[i])):
            child_lo = lo.copy()
            child_hi = hi.copy()
            child_lo[i] = child_lo_i
            child_hi[i] = child_hi_i
            result = evaluate(child_lo, child_hi)
            if result is None:
                continue
            child_bound, child_dual = result
            slack = _PRUNE_SLACK * max(1.0, abs(incumbent_obj))
            if incumbent_h is not None and child_bound <= incumbent_obj + slack:
                continue
            seq += 1
            heapq.heappush(heap, (-child_bound, seq, child_lo, child_hi, child_dual))

    if incumbent_h is None:
        if timed_out:
            raise TimeLimitError(
                f"no feasible solution within the {cfg.time_limit}s time limit"
            )
        return _infeasible_solution(
            "exact",
            STATUS_INFEASIBLE,
            time.perf_counter() - t0,
            best_violation if math.isfinite(best_violation) else None,
            nodes=nodes,
        )
    improved = _parity_improve(red, incumbent_h, red.lo, red.hi, eps_eff)
    consider_h(improved, float(red.values[np.arange(len(improved)), improved].sum()))
    wall = time.perf_counter() - t0
    if not heap and not timed_out:
        final_bound = incumbent_obj
    gap = max(0.0, (final_bound - incumbent_obj) / max(1.0, abs(incumbent_obj)))
    status = STATUS_TIME_LIMIT if timed_out else (
        STATUS_OPTIMAL if gap <= cfg.gap_tol else STATUS_FEASIBLE
    )
    return finalize(
        problem,
        _selection_from_h(red, incumbent_h),
        solver="exact",
        status=status,
        optimality_gap=gap,
        wall_time=wall,
        dual_bound=final_bound,
        nodes=nodes,
    )


# ---------------------------------------------------------------------------
# Lagrangian-relaxation heuristic.
# ---------------------------------------------------------------------------


def _adjusted_selection(problem: RerankProblem, lam: float) -> dict[str, tuple[int, ...]]:
    """Per-user top-K slots under the repriced scores S - lam * c, ties
    broken by item id (equivalently slot order, which is item-sorted
    within equal scores)."""
    out = {}
    for u in problem.users:
        s = np.asarray(problem.objective[u])
        c = np.asarray(problem.fairness_coeffs[u])
        adjusted = s - lam * c
        order = np.lexsort((np.arange(len(s)), -adjusted))[: problem.k]
        out[u] = tuple(sorted(int(x) for x in order))
    return out


def solve_lagrangian(problem: RerankProblem, cfg: SolverConfig | None = None) -> RerankSolution:
    """Bisection on the scalar multiplier of the coupling constraint.

    The repriced selections' gap is monotone non-increasing in the
    multiplier, so bisection brackets the band; when discreteness makes
    every trial jump across it, a swap-repair pass finishes the job. The
    result is always feasible or explicitly flagged as suspected
    infeasible, and carries its gap against the dual bound.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    if problem.unconstrained:
        return _passthrough(problem, t0)
    eps_eff = problem.epsilon + cfg.feasibility_tol
    lag = cfg.lagrangian

    evaluations = 0

    def point(lam: float):
        nonlocal evaluations
        evaluations += 1
        sel = _adjusted_selection(problem, lam)
        gap_value = constraint_value(problem, sel)
        obj = selection_objective(problem, sel)
        dual = obj - lam * gap_value + abs(lam) * eps_eff
        return sel, gap_value, obj, dual

    best_feasible = None  # (obj, sel)
    dual_bound = math.inf
    best_violation = math.inf

    def consider(sel, gap_value, obj):
        nonlocal best_feasible, best_violation
        violation = abs(gap_value) - eps_eff
        best_violation = min(best_violation, max(0.0, violation))
        if violation <= 0 and (best_feasible is None or obj > best_feasible[0]):
            best_feasible = (obj, sel)

    sel0, gap0, obj0, dual0 = point(0.0)
    dual_bound = min(dual_bound, dual0)
    consider(sel0, gap0, obj0)
    if abs(gap0) <= eps_eff:
        # Unconstrained optimum already satisfies the band.
        return finalize(
            problem,
            sel0,
            solver="lagrangian",
            status=STATUS_OPTIMAL,
            optimality_gap=0.0,
            wall_time=time.perf_counter() - t0,
            dual_bound=dual_bound,
        )

    direction = 1.0 if gap0 > eps_eff else -1.0
    crossed = (lambda g: g <= eps_eff) if direction > 0 else (lambda g: g >= -eps_eff)
    limit = lag.multiplier_hi if direction > 0 else -lag.multiplier_lo

    lam_a, sel_a, gap_a = 0.0, sel0, gap0
    lam_b = direction
    sel_b = gap_b = None
    reached_cross = False
    for _ in range(80):
        sel, gap_value, obj, dual = point(lam_b)
        dual_bound = min(dual_bound, dual)
        consider(sel, gap_value, obj)
        if crossed(gap_value):
            sel_b, gap_b = sel, gap_value
            reached_cross = True
            break
        if abs(lam_b) >= limit:
            sel_b, gap_b = sel, gap_value
            break
        lam_a, sel_a, gap_a = lam_b, sel, gap_value
        lam_b = direction * min(abs(lam_b) * 2.0, limit)

    if reached_cross:
        for _ in range(lag.max_bisection_iters):
            mid = 0.5 * (lam_a + lam_b)
            if mid == lam_a or mid == lam_b:
                break
            sel, gap_value, obj, dual = point(mid)
            dual_bound = min(dual_bound, dual)
            consider(sel, gap_value, obj)
            if crossed(gap_value):
                lam_b, sel_b, gap_b = mid, sel, gap_value
            else:
                lam_a, sel_a, gap_a = mid, sel, gap_value

    red = None
    if best_feasible is None:
        # Discreteness jumped across the band; repair from the nearer side,
        # falling back to the always-valid box corners.
        red = _reduce(problem)
        repaired_candidates: list[np.ndarray] = []
        sides = sorted(
            (s for s in ((sel_a, gap_a), (sel_b, gap_b)) if s[0] is not None),
            key=lambda s: abs(s[1]),
        )
        for sel, _ in sides:
            h = np.array(
                [
                    sum(1 for slot in sel[u] if problem.fairness_coeffs[u][slot] != 0.0)
                    for u in problem.users
                ],
                dtype=np.int64,
            )
            repaired = _repair(red, h, red.lo, red.hi, eps_eff)
            if repaired is not None:
                repaired_candidates.append(repaired)
        repaired_candidates.extend(
            a
            for a in _anchor_points(red, red.lo, red.hi)
            if abs(float((red.w * a).sum())) <= eps_eff
        )
        for h in repaired_candidates:
            repaired_sel = _selection_from_h(red, h)
            consider(
                repaired_sel,
                constraint_value(problem, repaired_sel),
                selection_objective(problem, repaired_sel),
            )
        if best_feasible is None:
            return _infeasible_solution(
                "lagrangian",
                STATUS_INFEASIBLE_SUSPECTED,
                time.perf_counter() - t0,
                best_violation if math.isfinite(best_violation) else None,
            )

    # Gap-neutral packages can often lift the bisection result further,
    # especially in the near-zero-epsilon regime.
    red = red if red is not None else _reduce(problem)
    obj, sel = best_feasible
    h = np.array(
        [
            sum(1 for slot in sel[u] if problem.fairness_coeffs[u][slot] != 0.0)
            for u in problem.users
        ],
        dtype=np.int64,
    )
    improved = _parity_improve(red, h, red.lo, red.hi, eps_eff)
    improved_sel = _selection_from_h(red, improved)
    consider(
        improved_sel,
        constraint_value(problem, improved_sel),
        selection_objective(problem, improved_sel),
    )
    obj, sel = best_feasible
    gap = max(0.0, (dual_bound - obj) / max(1.0, abs(dual_bound)))
    return finalize(
        problem,
        sel,
        solver="lagrangian",
        status=STATUS_OPTIMAL if gap <= cfg.gap_tol else STATUS_FEASIBLE,
        optimality_gap=gap,
        wall_time=time.perf_counter() - t0,
        dual_bound=dual_bound,
    )


# ---------------------------------------------------------------------------
# Debug dump.
# ---------------------------------------------------------------------------


def dump_problem_lp(problem: RerankProblem) -> str:
    """LP-format rendering of the selection problem for cross-checking
    against external solvers. Variable x_{i}_{j} is user index i, slot j;
    a legend maps indexes back to ids."""
    lines = ["\\ fairness-constrained top-K selection"]
    lines.append(f"\\ users={len(problem.users)} k={problem.k} epsilon={problem.epsilon}")
    for i, u in enumerate(problem.users):
        lines.append(f"\\ user {i} = {u}")
    obj_terms = []
    for i, u in enumerate(problem.users):
        for j, s in enumerate(problem.objective[u]):
            obj_terms.append(f"{'+' if s >= 0 else '-'} {abs(s)!r} x_{i}_{j}")
    lines.append("Maximize")
    lines.append(" obj: " + " ".join(obj_terms).lstrip("+ "))
    lines.append("Subject To")
    for i, u in enumerate(problem.users):
        terms = " + ".join(f"x_{i}_{j}" for j in range(len(problem.objective[u])))
        lines.append(f" card_{i}: {terms} = {problem.k}")
    if not problem.unconstrained:
        fair_terms = []
        for i, u in enumerate(problem.users):
            for j, c in enumerate(problem.fairness_coeffs[u]):
                if c != 0.0:
                    fair_terms.append(f"{'+' if c >= 0 else '-'} {abs(c)!r} x_{i}_{j}")
        expr = " ".join(fair_terms).lstrip("+ ") or "0 x_0_0"
        lines.append(f" fair_hi: {expr} <= {problem.epsilon!r}")
        lines.append(f" fair_lo: {expr} >= {(-problem.epsilon)!r}")
    lines.append("Binary")
    for i, u in enumerate(problem.users):
        lines.append(" " + " ".join(f"x_{i}_{j}" for j in range(len(problem.objective[u]))))
    lines.append("End")
    return "\n".join(lines) + "\n"
