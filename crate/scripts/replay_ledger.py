"""Recompute a ledger CSV from a diff.jsonl file without using the stored verdicts.

usage: replay_ledger.py DIFF_JSONL > ledger.csv
"""
import csv
import json
import sys
from collections import defaultdict

CATEGORIES = ["Pass", "Fail", "NotApplied", "Warning", "500", "EmptyResponse"]
SERVICE_NAMES = {"Http500": "500"}


def main(path):
    by_provider = defaultdict(list)
    with open(path) as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                by_provider[rec["provider"]].append(rec)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["provider", "category", "match", "match_pct", "mismatch", "mismatch_pct", "mismatched_rules"])
    for provider in sorted(by_provider):
        recs = by_provider[provider]
        executed = sorted({(r["rule_id"], r["version"]) for r in recs})
        versions = defaultdict(int)
        for rid, _ in executed:
            versions[rid] += 1
        label = {k: (f"{k[0]}/{k[1]}" if versions[k[0]] > 1 else k[0]) for k in executed}
        for cat in CATEGORIES:
            bad = set()
            for r in recs:
                service = SERVICE_NAMES.get(r["service"], r["service"])
                ref = r["reference"].get("Result") if isinstance(r["reference"], dict) else None
                if service == cat and ref != service:
                    bad.add((r["rule_id"], r["version"]))
            n = len(executed)
            m = len(bad)
            out.writerow([
                provider, cat, n - m, f"{100 * (n - m) / n:.2f}", m, f"{100 * m / n:.2f}",
                ", ".join(label[k] for k in sorted(bad)),
            ])


if __name__ == "__main__":
    main(sys.argv[1])
