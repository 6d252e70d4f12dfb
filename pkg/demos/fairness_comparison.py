"""Compare QF, TRF and UMMF on six streams whose rate-utility curves drift.

Prints per-seed quality spread and mean deviation for each policy, then the
relative variance reduction QF achieves over TRF.

    python3 demos/fairness_comparison.py [n_seeds]
"""

from __future__ import annotations

import sys

import numpy as np

from qfmux.control import Policy
from qfmux.scenarios import fairness_scenario
from qfmux.sim import run

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
policies = (Policy.QF, Policy.TRF, Policy.UMMF)

print(f"{'seed':>4} " + " ".join(f"{p.value + ' s2P':>10} {p.value + ' |dP|':>10}" for p in policies))
s2 = {p: [] for p in policies}
for seed in range(n_seeds):
    cells = []
    for p in policies:
        m = run(fairness_scenario(seed, p)).metrics
        s2[p].append(m.sigma2_P)
        cells.append(f"{m.sigma2_P:10.4f} {abs(m.delta_P):10.4f}")
    print(f"{seed:4d} " + " ".join(cells))

qf, trf = np.mean(s2[Policy.QF]), np.mean(s2[Policy.TRF])
print(f"\nmean utility variance: QF {qf:.4f}, TRF {trf:.4f} ({1 - qf / trf:.1%} lower under QF)")
