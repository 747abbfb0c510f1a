"""Writes the Dunn/Benjamini-Yekutieli golden fixture using scipy and statsmodels."""
import itertools
import json
import sys

import numpy as np
from scipy import stats
from statsmodels.stats.multitest import multipletests

GROUPS = {
    "alpha": [62.7, 70.1, 70.1, 81.0, 55.2, 90.0, 70.1, 66.6, 59.9, 88.8],
    "beta": [40.0, 45.5, 52.1, 38.7, 70.1, 49.9, 41.0, 47.3, 44.4],
    "gamma": [91.2, 95.5, 100.0, 100.0, 89.1, 97.7, 93.3, 100.0, 70.1, 99.0, 85.4],
}


def dunn(groups):
    labels = list(groups)
    values = np.concatenate([groups[k] for k in labels])
    ranks = stats.rankdata(values)
    n = len(values)
    _, counts = np.unique(values, return_counts=True)
    ties = float(np.sum(counts**3 - counts))
    var = n * (n + 1) / 12.0 - ties / (12.0 * (n - 1))
    mean_rank, at = {}, 0
    for k in labels:
        m = len(groups[k])
        mean_rank[k] = ranks[at:at + m].mean()
        at += m
    rows = []
    for a, b in itertools.combinations(labels, 2):
        se = np.sqrt(var * (1 / len(groups[a]) + 1 / len(groups[b])))
        z = (mean_rank[a] - mean_rank[b]) / se
        rows.append({"group1": a, "group2": b, "z": z, "p": 2 * stats.norm.sf(abs(z))})
    adjusted = multipletests([r["p"] for r in rows], method="fdr_by")[1]
    for r, adj in zip(rows, adjusted):
        r["p_adjusted"] = float(adj)
        r["z"] = float(r["z"])
        r["p"] = float(r["p"])
    return rows


def main():
    h, p = stats.kruskal(*GROUPS.values())
    out = {
        "groups": GROUPS,
        "kruskal": {"h": float(h), "p": float(p)},
        "pairs": dunn(GROUPS),
    }
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
