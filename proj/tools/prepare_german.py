#!/usr/bin/env python3
"""Convert the UCI Statlog German Credit file (german.data) to CSV + schema sidecar.

Usage: prepare_german.py data/german_credit/german.data data/german_credit
"""
import csv
import json
import sys
from pathlib import Path

COLUMNS = [
    ("checking_status", "categorical"),
    ("duration", "numeric"),
    ("credit_history", "categorical"),
    ("purpose", "categorical"),
    ("credit_amount", "numeric"),
    ("savings", "categorical"),
    ("employment_since", "categorical"),
    ("installment_rate", "numeric"),
    ("personal_status_sex", "categorical"),
    ("other_debtors", "categorical"),
    ("residence_since", "numeric"),
    ("property", "categorical"),
    ("age", "numeric"),
    ("other_installment_plans", "categorical"),
    ("housing", "categorical"),
    ("existing_credits", "numeric"),
    ("job", "categorical"),
    ("people_liable", "numeric"),
    ("telephone", "categorical"),
    ("foreign_worker", "categorical"),
]
LABEL = "good_credit"


def main(src: str, out_dir: str) -> None:
    rows = []
    with open(src) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            assert len(parts) == len(COLUMNS) + 1, line
            # 1 = good, 2 = bad in the original coding
            rows.append(parts[:-1] + ["1" if parts[-1] == "1" else "0"])

    out = Path(out_dir)
    with open(out / "german_credit.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([name for name, _ in COLUMNS] + [LABEL])
        writer.writerows(rows)

    features = []
    for idx, (name, kind) in enumerate(COLUMNS):
        column = [r[idx] for r in rows]
        if kind == "numeric":
            values = [float(v) for v in column]
            features.append({"name": name, "kind": kind, "bounds": [min(values), max(values)]})
        else:
            features.append({"name": name, "kind": kind, "categories": sorted(set(column))})
    schema = {"name": "german_credit", "label": LABEL, "features": features}
    with open(out / "german_credit.schema.json", "w") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
