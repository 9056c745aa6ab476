"""Freezes reference p-values from scipy/statsmodels into stats_reference.json."""
import json

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportions_ztest

rng = np.random.default_rng(20240611)
paired = []
for i in range(20):
    n = int(rng.integers(3, 40))
    a = rng.normal(0.6, 0.15, n).round(6)
    b = (a + rng.normal(rng.uniform(-0.1, 0.1), 0.1, n)).round(6)
    r = stats.ttest_rel(a, b)
    paired.append({"a": a.tolist(), "b": b.tolist(), "t": float(r.statistic), "p": float(r.pvalue)})
d = [0.5, 0.3, 0.4, 0.6, 0.2]
r = stats.ttest_rel(d, [0.0] * 5)
paired.append({"a": d, "b": [0.0] * 5, "t": float(r.statistic), "p": float(r.pvalue)})

props = []
for i in range(20):
    n1, n2 = (int(x) for x in rng.integers(20, 5000, 2))
    p1 = rng.uniform(0.2, 0.8)
    p2 = p1 + rng.uniform(-0.06, 0.06)
    k1 = int(round(p1 * n1))
    k2 = int(round(p2 * n2))
    z, p = proportions_ztest([k1, k2], [n1, n2])
    props.append({"k1": k1, "n1": n1, "k2": k2, "n2": n2, "z": float(z), "p": float(p)})

with open("stats_reference.json", "w") as f:
    json.dump({"paired_t": paired, "two_proportion_z": props}, f, indent=1)
