"""Command-line pipeline driver.

Subcommands cover the full experiment path: ``split`` raw interactions,
``group`` users by activity, ``train`` the factorization baseline,
``score`` evaluation candidates, ``rerank`` them under a fairness bound,
``eval`` any lists, and ``sweep`` the bound over a grid.

Every command is a pure function of its input files, flags and seed:
repeated runs produce byte-identical output files. Because of that,
measured wall times go to stderr and the diagnostics JSON records null
for ``wall_time`` unless ``--record-timings`` is given (which documents
itself as breaking byte-identity).

Exit codes: 0 success, 2 infeasible problem, 3 input/usage error,
4 solver timeout without any feasible solution.

Metric values in all files are on the percent scale, and so is
``--epsilon``; internally the library works in [0, 1].
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

from . import metrics
from .core import (
    FairRerankError,
    GroupAssignment,
    ParseError,
    RerankSolution,
    TimeLimitError,
)
from .grouping import (
    GroupingConfig,
    assign_groups,
    distribution_report,
    load_groups,
    n_users_without_price,
    save_groups,
)
from .ingest import (
    NegativeSamplingConfig,
    dataset_stats,
    parse_interactions,
    read_candidates,
    read_split,
    sample_candidates,
    split_dataset,
    write_candidates,
    write_split,
)
from .mf import FactorModel, TrainConfig, train_bpr
from .rerank import (
    SolverConfig,
    build_problem,
    dump_problem_lp,
    epsilon_from_baseline,
    solve,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT_ERROR = 3
EXIT_TIMEOUT = 4


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the input-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_floats(raw: str, what: str) -> list[float]:
    try:
        values = [float(x) for x in raw.split(",")]
    except ValueError:
        raise ParseError(f"{what} must be comma-separated numbers, got {raw!r}") from None
    if not values:
        raise ParseError(f"empty {what}")
    return values


def _parse_ratios(raw: str) -> tuple[float, float, float]:
    parts = _parse_floats(raw, "--ratios")
    if len(parts) != 3:
        raise ParseError(f"--ratios needs three comma-separated values, got {raw!r}")
    return tuple(parts)  # type: ignore[return-value]


def _parse_grid(raw: str) -> list[float]:
    return _parse_floats(raw, "grid")


def _load_config_defaults(argv: list[str]) -> dict[str, str]:
    """Pull KEY=VALUE pairs from an optional ``--config`` file; values are
    injected as argv tokens ahead of the user's own flags, so explicitly
    passed flags win."""
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if not config_path:
        return {}
    defaults = {}
    with open(config_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected KEY=VALUE", line_no, config_path)
            key, value = line.split("=", 1)
            defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


def _epsilon_percent(epsilon_internal: float):
    return "inf" if math.isinf(epsilon_internal) else epsilon_internal * 100.0


def _diagnostics(
    solution: RerankSolution,
    epsilon_internal: float,
    cfg: SolverConfig,
    k: int,
    n_users: int,
    record_timings: bool,
) -> dict:
    return {
        "objective": None if math.isnan(solution.objective_value) else solution.objective_value,
        "ugf": None if math.isnan(solution.achieved_ugf) else solution.achieved_ugf * 100.0,
        "epsilon": _epsilon_percent(epsilon_internal),
        "solver": solution.solver,
        "status": solution.status,
        "gap": None if math.isinf(solution.optimality_gap) else solution.optimality_gap,
        "wall_time": solution.wall_time if record_timings else None,
        "nodes": solution.nodes,
        "dual_bound": solution.dual_bound,
        "best_violation": solution.best_violation,
        "feasibility_tol": cfg.feasibility_tol,
        "k": k,
        "n_users": n_users,
    }


def _write_solution_csv(path: Path, solution: RerankSolution, cands_by_user) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "rank", "item_id", "score"])
        for user_id in sorted(solution.final_lists):
            scores = {c.item_id: c.score for c in cands_by_user[user_id].candidates}
            for rank, item_id in enumerate(solution.final_lists[user_id], start=1):
                writer.writerow([user_id, rank, item_id, repr(scores[item_id])])


def _read_solution_csv(path: str | Path) -> dict[str, tuple[str, ...]]:
    lists: dict[str, list[tuple[int, str]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "rank", "item_id", "score"]:
            raise ParseError("expected header 'user_id,rank,item_id,score'", 1, str(path))
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line_no, str(path))
            lists.setdefault(row[0], []).append((int(row[1]), row[2]))
    return {
        u: tuple(item for _, item in sorted(entries))
        for u, entries in sorted(lists.items())
    }


def _baseline_lists(cands, k: int) -> dict[str, tuple[str, ...]]:
    return {c.user_id: c.top_k_items(k) for c in cands}


def _paired_reports(lists, cands_by_user, groups: GroupAssignment, k: int) -> dict:
    f1 = metrics.group_report(
        metrics.per_user_f1(lists, cands_by_user, k), groups, metrics.METRIC_F1, k
    )
    ndcg = metrics.group_report(
        metrics.per_user_ndcg(lists, cands_by_user, k), groups, metrics.METRIC_NDCG, k
    )
    return {"f1": metrics.report_to_json(f1), "ndcg": metrics.report_to_json(ndcg)}


def _truncate_candidates(cands, top_n: int | None):
    if top_n is None:
        return cands
    out = []
    for c in cands:
        out.append(
            type(c)(
                user_id=c.user_id,
                candidates=c.candidates[:top_n],
                n_relevant_total=c.n_relevant_total,
            )
        )
    return out


def _evaluable(cands):
    """Drop users without any relevant item: the evaluation protocol cannot
    score them and they carry no weight in the gap."""
    kept = [c for c in cands if c.n_relevant_total >= 1]
    dropped = len(cands) - len(kept)
    if dropped:
        _log(f"excluded {dropped} users with no relevant items")
    return kept


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_split(args) -> int:
    t0 = time.perf_counter()
    log = parse_interactions(args.input, args.prices)
    split = split_dataset(
        log, _parse_ratios(args.ratios), mode=args.split_mode, seed=args.seed
    )
    out_dir = Path(args.out_dir)
    paths = write_split(split, out_dir)
    stats = {
        "dataset": dataset_stats(log),
        "train": dataset_stats(split.train),
        "validation": dataset_stats(split.validation),
        "test": dataset_stats(split.test),
        "ratios": list(_parse_ratios(args.ratios)),
        "mode": args.split_mode,
    }
    _write_json(out_dir / "stats.json", stats)
    _log(
        f"split {log.n_actions} actions / {log.n_users} users / {log.n_items} items "
        f"-> {', '.join(str(p) for p in paths.values())} ({time.perf_counter() - t0:.1f}s)"
    )
    return EXIT_OK


def cmd_group(args) -> int:
    train = parse_interactions(args.input, args.prices)
    cfg = GroupingConfig(method=args.method, top_fraction=args.top_fraction)
    groups = assign_groups(train, cfg)
    save_groups(groups, args.out)
    if args.report:
        report = {
            "method": cfg.method,
            "top_fraction": cfg.top_fraction,
            "n_advantaged": len(groups.advantaged),
            "n_disadvantaged": len(groups.disadvantaged),
            "n_users_without_price": n_users_without_price(train),
        }
        if args.thresholds:
            thresholds = _parse_grid(args.thresholds)
            report["distribution"] = [
                {"threshold": t, "fraction_at_or_above": f}
                for t, f in distribution_report(train, thresholds, cfg.method)
            ]
        _write_json(Path(args.report), report)
    _log(
        f"grouped {train.n_users} users: {len(groups.advantaged)} advantaged / "
        f"{len(groups.disadvantaged)} disadvantaged -> {args.out}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    train = parse_interactions(args.train)
    validation = parse_interactions(args.validation) if args.validation else None
    users = set(train.user_ids)
    items = set(train.item_ids)
    if validation is not None:
        users |= set(validation.user_ids)
        items |= set(validation.item_ids)
    for extra in (args.vocab or "").split(","):
        if extra.strip():
            extra_log = parse_interactions(extra.strip())
            users |= set(extra_log.user_ids)
            items |= set(extra_log.item_ids)
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        l2=args.l2,
        epochs=args.epochs,
        seed=args.seed,
        embedding_dim=args.dim,
    )
    model = train_bpr(
        train,
        cfg,
        validation=validation,
        user_vocabulary=tuple(sorted(users)),
        item_vocabulary=tuple(sorted(items)),
    )
    model.save(args.out)
    _log(
        f"trained d={cfg.embedding_dim} model on {train.n_actions} pairs for "
        f"{cfg.epochs} epochs -> {args.out} ({time.perf_counter() - t0:.1f}s)"
    )
    return EXIT_OK


def cmd_score(args) -> int:
    t0 = time.perf_counter()
    model = FactorModel.load(args.model)
    split = read_split(args.train, args.validation, args.test)
    cfg = NegativeSamplingConfig(n_negatives=args.negatives, seed=args.seed)
    cands = sample_candidates(split, model.score, cfg, part=args.part)
    write_candidates(cands, args.out)
    _log(
        f"scored {len(cands)} users x (positives + {cfg.n_negatives} negatives) "
        f"-> {args.out} ({time.perf_counter() - t0:.1f}s)"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    cands = _evaluable(read_candidates(args.candidates))
    groups = load_groups(args.groups)
    cands_by_user = {c.user_id: c for c in cands}
    if args.solution:
        lists = _read_solution_csv(args.solution)
        missing = set(lists) - set(cands_by_user)
        if missing:
            raise ParseError(
                f"solution users missing from candidates: {sorted(missing)[:5]}"
            )
    else:
        lists = _baseline_lists(cands, args.k)
    reports = _paired_reports(lists, cands_by_user, groups, args.k)
    _write_json(Path(args.out), reports)
    _log(f"evaluated {len(lists)} users -> {args.out}")
    return EXIT_OK


def _resolve_epsilon(args, before_f1_report) -> float:
    """Internal-scale epsilon from either --epsilon (percent / 'inf') or
    --epsilon-factor applied to the baseline gap."""
    if args.epsilon is not None:
        if args.epsilon.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            value = float(args.epsilon)
        except ValueError:
            raise ParseError(f"--epsilon must be a number or 'inf', got {args.epsilon!r}") from None
        if value < 0:
            raise ParseError(f"--epsilon must be >= 0, got {value}")
        return value / 100.0
    return epsilon_from_baseline(before_f1_report, args.epsilon_factor)


def cmd_rerank(args) -> int:
    t0 = time.perf_counter()
    cands = _evaluable(_truncate_candidates(read_candidates(args.candidates), args.top_n))
    groups = load_groups(args.groups)
    cands_by_user = {c.user_id: c for c in cands}
    baseline = _baseline_lists(cands, args.k)
    before_f1 = metrics.group_report(
        metrics.per_user_f1(baseline, cands_by_user, args.k),
        groups,
        metrics.METRIC_F1,
        args.k,
    )
    epsilon = _resolve_epsilon(args, before_f1)
    problem = build_problem(cands, groups, args.k, epsilon)
    cfg = SolverConfig(
        mode=args.solver,
        feasibility_tol=args.feasibility_tol,
        gap_tol=args.gap_tol,
        time_limit=args.time_limit,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.dump_lp:
        with open(args.dump_lp, "w", encoding="utf-8") as fh:
            fh.write(dump_problem_lp(problem))
    solution = solve(problem, cfg)
    _write_json(
        out_dir / "diagnostics.json",
        _diagnostics(solution, epsilon, cfg, args.k, len(cands), args.record_timings),
    )
    if not solution.feasible:
        _log(
            f"problem infeasible at epsilon={_epsilon_percent(epsilon)} "
            f"(status {solution.status}); diagnostics written"
        )
        return EXIT_INFEASIBLE
    _write_solution_csv(out_dir / "solution.csv", solution, cands_by_user)
    reports = {
        "before": _paired_reports(baseline, cands_by_user, groups, args.k),
        "after": _paired_reports(solution.final_lists, cands_by_user, groups, args.k),
    }
    _write_json(out_dir / "reports.json", reports)
    _log(
        f"reranked {len(cands)} users with {solution.solver} "
        f"(status {solution.status}, ugf {solution.achieved_ugf * 100:.2f}%) "
        f"-> {out_dir} ({time.perf_counter() - t0:.1f}s)"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    cands = _evaluable(_truncate_candidates(read_candidates(args.candidates), args.top_n))
    groups = load_groups(args.groups)
    cands_by_user = {c.user_id: c for c in cands}
    baseline = _baseline_lists(cands, args.k)
    before_f1 = metrics.group_report(
        metrics.per_user_f1(baseline, cands_by_user, args.k),
        groups,
        metrics.METRIC_F1,
        args.k,
    )
    if args.epsilon_grid:
        grid = [e / 100.0 for e in _parse_grid(args.epsilon_grid)]
    else:
        grid = [
            epsilon_from_baseline(before_f1, f) for f in _parse_grid(args.factor_grid)
        ]
    cfg = SolverConfig(
        mode=args.solver,
        feasibility_tol=args.feasibility_tol,
        gap_tol=args.gap_tol,
        time_limit=args.time_limit,
    )
    rows = []
    for epsilon in grid:
        row = {"epsilon": _epsilon_percent(epsilon)}
        try:
            problem = build_problem(cands, groups, args.k, epsilon)
            solution = solve(problem, cfg)
            row["status"] = solution.status
            if solution.feasible:
                after = _paired_reports(solution.final_lists, cands_by_user, groups, args.k)
                row.update(
                    {
                        "objective": solution.objective_value,
                        "gap": solution.optimality_gap,
                        "f1_overall": after["f1"]["precise"]["overall"],
                        "f1_advantaged": after["f1"]["precise"]["advantaged"],
                        "f1_disadvantaged": after["f1"]["precise"]["disadvantaged"],
                        "f1_ugf": after["f1"]["precise"]["ugf"],
                        "ndcg_overall": after["ndcg"]["precise"]["overall"],
                        "ndcg_advantaged": after["ndcg"]["precise"]["advantaged"],
                        "ndcg_disadvantaged": after["ndcg"]["precise"]["disadvantaged"],
                        "ndcg_ugf": after["ndcg"]["precise"]["ugf"],
                    }
                )
        except TimeLimitError as exc:
            row["status"] = "timeout"
            row["error"] = str(exc)
        except FairRerankError as exc:
            row["status"] = "error"
            row["error"] = str(exc)
        rows.append(row)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = [
        "epsilon", "status", "objective", "gap",
        "f1_overall", "f1_advantaged", "f1_disadvantaged", "f1_ugf",
        "ndcg_overall", "ndcg_advantaged", "ndcg_disadvantaged", "ndcg_ugf",
        "error",
    ]
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                ["" if row.get(c) is None else
                 (repr(row[c]) if isinstance(row.get(c), float) else row[c])
                 for c in columns]
            )
    _write_json(
        out_dir / "sweep.json",
        {"baseline_f1_ugf": before_f1.ugf * 100.0, "rows": rows},
    )
    _write_sweep_svg(out_dir / "sweep.svg", rows, args.k)
    _log(f"swept {len(rows)} epsilon values -> {out_dir} ({time.perf_counter() - t0:.1f}s)")
    return EXIT_OK


def _write_sweep_svg(path: Path, rows, k: int) -> None:
    """Two-panel line chart (F1@K, NDCG@K) with overall / advantaged /
    disadvantaged series, ordered from loosest to strictest bound.
    Rendered byte-deterministically (fixed hash salt, no date metadata)."""
    import matplotlib

    matplotlib.use("svg", force=False)
    import matplotlib.pyplot as plt

    plottable = [r for r in rows if r.get("f1_overall") is not None]

    def eps_key(row):
        return -math.inf if row["epsilon"] == "inf" else -float(row["epsilon"])

    plottable.sort(key=eps_key)
    labels = [
        ("inf" if r["epsilon"] == "inf" else f"{float(r['epsilon']):g}") for r in plottable
    ]
    x = list(range(len(plottable)))
    with plt.rc_context({"svg.hashsalt": "fairrerank"}):
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.5))
        for ax, prefix, title in (
            (axes[0], "f1", f"F1@{k}"),
            (axes[1], "ndcg", f"NDCG@{k}"),
        ):
            for series, label in (
                ("overall", "Overall"),
                ("advantaged", "Advantaged"),
                ("disadvantaged", "Disadvantaged"),
            ):
                ax.plot(
                    x,
                    [r[f"{prefix}_{series}"] for r in plottable],
                    marker="s",
                    label=label,
                )
            ax.set_xticks(x)
            ax.set_xticklabels(labels)
            ax.set_xlabel("epsilon (%), loosest to strictest")
            ax.set_ylabel(f"{title} (%)")
            ax.grid(axis="y", alpha=0.4)
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------------------
# Parser assembly.
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fairrerank", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="flat KEY=VALUE config file; flags win")
        p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="parallelism bound (outputs never depend on it)",
        )

    p = sub.add_parser("split", help="chronological train/validation/test split")
    common(p)
    p.add_argument("--input", required=True, help="interactions CSV")
    p.add_argument("--prices", help="item price CSV (optional)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--split-mode", choices=["chronological", "random"], default="chronological")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("group", help="advantaged/disadvantaged user partition")
    common(p)
    p.add_argument("--input", required=True, help="training interactions CSV")
    p.add_argument("--prices", help="item price CSV (needed for consumption methods)")
    p.add_argument(
        "--method",
        choices=["interactions", "total_consumption", "max_price"],
        default="interactions",
    )
    p.add_argument("--top-fraction", type=float, default=0.05)
    p.add_argument("--out", required=True, help="group CSV to write")
    p.add_argument("--report", help="optional JSON report path")
    p.add_argument("--thresholds", help="comma list for the distribution report")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("train", help="train the pairwise-ranking factor model")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--validation", help="validation CSV for model selection")
    p.add_argument("--vocab", help="comma list of extra CSVs whose ids join the vocabulary")
    p.add_argument("--out", required=True, help="model checkpoint path (.npz)")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--l2", type=float, default=0.00001)
    p.add_argument("--epochs", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="sample and score evaluation candidates")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--part", choices=["validation", "test"], default="test")
    p.add_argument("--negatives", type=int, default=100)
    p.add_argument("--out", required=True, help="candidate CSV to write")
    p.set_defaults(func=cmd_score)

    def rerank_common(p: argparse.ArgumentParser):
        p.add_argument("--candidates", required=True, help="candidate CSV")
        p.add_argument("--groups", required=True, help="group CSV")
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--top-n", type=int, help="truncate candidate pools to the top N")
        p.add_argument(
            "--solver", choices=["oracle", "exact", "lagrangian"], default="lagrangian"
        )
        p.add_argument("--feasibility-tol", type=float, default=1e-9)
        p.add_argument("--gap-tol", type=float, default=1e-6)
        p.add_argument("--time-limit", type=float, default=300.0)

    p = sub.add_parser("rerank", help="fair top-K re-selection")
    common(p)
    rerank_common(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--epsilon", help="gap bound in percent, or 'inf'")
    group.add_argument(
        "--epsilon-factor",
        type=float,
        default=0.5,
        help="bound as a fraction of the baseline F1 gap",
    )
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dump-lp", help="also write the problem in LP format")
    p.add_argument(
        "--record-timings",
        action="store_true",
        help="write measured wall times into diagnostics (breaks byte-identity)",
    )
    p.set_defaults(func=cmd_rerank, epsilon=None)

    p = sub.add_parser("eval", help="group-level reports for lists or candidates")
    common(p)
    p.add_argument("--candidates", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--solution", help="solution CSV; default evaluates baseline top-K")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="re-rank across an epsilon grid")
    common(p)
    rerank_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--epsilon-grid", help="comma list of bounds in percent")
    group.add_argument("--factor-grid", help="comma list of baseline-gap fractions")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def _inject_config(argv: list[str], parser: _Parser, defaults: dict[str, str]) -> list[str]:
    """Turn config entries into argv tokens placed before the user's flags,
    so explicitly passed flags win (argparse keeps the last occurrence).
    Only keys the chosen subcommand understands are injected."""
    if not defaults or not argv or argv[0].startswith("-"):
        return argv
    subparsers = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    sub = subparsers.get(argv[0])
    if sub is None:
        return argv
    known = {}
    for action in sub._actions:  # noqa: SLF001
        if action.option_strings:
            known[action.dest] = action
    injected: list[str] = []
    for key, value in defaults.items():
        action = known.get(key)
        if action is None or key == "config":
            continue
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            if value.strip().lower() in ("1", "true", "yes"):
                injected.append(flag)
        else:
            injected.extend([flag, value])
    return [argv[0], *injected, *argv[1:]]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _load_config_defaults(argv)
        argv = _inject_config(argv, parser, defaults)
    except (OSError, FairRerankError) as exc:
        print(f"fairrerank: error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TimeLimitError as exc:
        print(f"fairrerank: timeout: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (FairRerankError, OSError) as exc:
        print(f"fairrerank: error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
