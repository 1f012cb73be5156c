#!/usr/bin/env python3
"""Convert Amazon 5-core review dumps to the pipeline's CSV formats.

Reviews come as one JSON object per line with reviewerID, asin, overall
and unixReviewTime; item metadata (optional) carries asin and price.
Output: an interactions CSV (user_id,item_id,rating,timestamp) and,
when metadata is given, a price CSV (item_id,price).

Not part of the tested surface; a best-effort convenience for the
real-data integration run described in the README.
"""

import argparse
import csv
import gzip
import json
import sys


def _open(path):
    return gzip.open(path, "rt", encoding="utf-8") if path.endswith(".gz") else open(
        path, encoding="utf-8"
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reviews", required=True, help="5-core reviews JSON(.gz)")
    parser.add_argument("--metadata", help="item metadata JSON(.gz) with prices")
    parser.add_argument("--out", required=True, help="interactions CSV to write")
    parser.add_argument("--prices-out", help="price CSV to write (needs --metadata)")
    args = parser.parse_args()

    n = 0
    with _open(args.reviews) as fh, open(args.out, "w", newline="", encoding="utf-8") as out:
        writer = csv.writer(out)
        writer.writerow(["user_id", "item_id", "rating", "timestamp"])
        for line in fh:
            line = line.strip()
            if not line:
                continue
            # Some dumps are python-literal style; tolerate both.
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                import ast

                row = ast.literal_eval(line)
            writer.writerow(
                [
                    row["reviewerID"],
                    row["asin"],
                    repr(float(row["overall"])),
                    int(row["unixReviewTime"]),
                ]
            )
            n += 1
    print(f"wrote {n} interactions to {args.out}", file=sys.stderr)

    if args.metadata and args.prices_out:
        m = 0
        with _open(args.metadata) as fh, open(
            args.prices_out, "w", newline="", encoding="utf-8"
        ) as out:
            writer = csv.writer(out)
            writer.writerow(["item_id", "price"])
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    import ast

                    try:
                        row = ast.literal_eval(line)
                    except (ValueError, SyntaxError):
                        continue
                price = row.get("price")
                if isinstance(price, str):
                    price = price.lstrip("$").replace(",", "")
                try:
                    price = float(price)
                except (TypeError, ValueError):
                    continue
                writer.writerow([row["asin"], repr(price)])
                m += 1
        print(f"wrote {m} prices to {args.prices_out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
