#!/usr/bin/env python3
"""Qualitative integration run on a real interactions CSV.

Runs the full pipeline (split, group, train, score, rerank with the bound
at half the baseline gap) and checks the directional pattern only: a large
baseline gap, a re-ranked gap at or below half of it, and overall F1 at or
above the baseline. Absolute numbers depend on the dataset, the trained
baseline and price availability, and are not expected to match anything.

Example:
    python scripts/convert_amazon_reviews.py --reviews reviews.json.gz --out grocery.csv
    python scripts/run_real_data.py --input grocery.csv --epochs 30
"""

import argparse
import sys

from fairrerank.grouping import GroupingConfig, assign_groups
from fairrerank.ingest import NegativeSamplingConfig, parse_interactions, sample_candidates, split_dataset
from fairrerank.metrics import METRIC_F1, group_report, per_user_f1
from fairrerank.mf import TrainConfig, train_bpr
from fairrerank.rerank import SolverConfig, build_problem, epsilon_from_baseline, solve


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", required=True, help="interactions CSV")
    parser.add_argument("--prices", help="item price CSV")
    parser.add_argument("--method", default="interactions",
                        choices=["interactions", "total_consumption", "max_price"])
    parser.add_argument("--top-fraction", type=float, default=0.05)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--negatives", type=int, default=100)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--learning-rate", type=float, default=0.001)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--solver", default="lagrangian")
    args = parser.parse_args()

    log = parse_interactions(args.input, args.prices)
    print(f"dataset: {log.n_actions} actions, {log.n_users} users, "
          f"{log.n_items} items, sparsity {log.sparsity * 100:.2f}%")
    split = split_dataset(log)
    groups = assign_groups(split.train, GroupingConfig(args.method, args.top_fraction))
    model = train_bpr(
        split.train,
        TrainConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                    seed=args.seed, embedding_dim=args.dim),
        validation=split.validation,
        user_vocabulary=split.all_user_ids,
        item_vocabulary=split.all_item_ids,
    )
    cands = sample_candidates(
        split, model.score, NegativeSamplingConfig(args.negatives, args.seed)
    )
    cands_by_user = {c.user_id: c for c in cands}
    baseline = {c.user_id: c.top_k_items(args.k) for c in cands}
    before = group_report(per_user_f1(baseline, cands_by_user, args.k),
                          groups, METRIC_F1, args.k)
    epsilon = epsilon_from_baseline(before, 0.5)
    solution = solve(build_problem(cands, groups, args.k, epsilon),
                     SolverConfig(mode=args.solver))
    after = group_report(per_user_f1(solution.final_lists, cands_by_user, args.k),
                         groups, METRIC_F1, args.k)

    print(f"baseline F1@{args.k}: overall {before.overall * 100:.2f} "
          f"adv {before.advantaged * 100:.2f} disadv {before.disadvantaged * 100:.2f} "
          f"gap {before.ugf * 100:.2f}")
    print(f"fair     F1@{args.k}: overall {after.overall * 100:.2f} "
          f"adv {after.advantaged * 100:.2f} disadv {after.disadvantaged * 100:.2f} "
          f"gap {after.ugf * 100:.2f}  (bound {epsilon * 100:.2f})")
    checks = {
        "re-ranked gap <= half the baseline gap": after.ugf <= epsilon + 1e-9,
        "overall F1 kept or improved": after.overall >= before.overall,
    }
    for name, passed in checks.items():
        print(f"  [{'ok' if passed else 'MISS'}] {name}")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
