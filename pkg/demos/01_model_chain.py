"""
Flexibility bands of three tiny systems
=======================================

Each model returns a band [lower_t, upper_t] of import power at the
substation and a flexibility index, the weighted sum of band widths.
Inner models only promise what a causal dispatch can always deliver;
the two-stage and outer models are relaxations.
"""

import numpy as np

from flexagg import MODELS, aggregate, aggregate_interval, example1, example2, example3
from flexagg.model import exact_aggregate_interval

# A single lossy ESS, one period, starting full.  The convex split model
# lets the ESS charge and discharge at once, which burns energy and opens
# a sliver of import headroom that the exact model does not have.
case = example1()
print("one ESS, convex model     :", np.round(aggregate_interval(case, 1), 6))
print("one ESS, without mixing   :", np.round(aggregate_interval(case, 1, mixing=False), 6))
print("one ESS, exact model      :", np.round(exact_aggregate_interval(case, 1), 6))

# Two nodes, a line limit and a DG that only exists in period 1.
# Relaxations report 4, but only 3 is deliverable without knowing the
# period-2 setpoint in advance.
for case in (example2(), example3()):
    print(f"\n{case.name}")
    for m in MODELS:
        res = aggregate(case, m)
        print(f"  {m:>12}: index {res.objective:5.2f}  lower {np.round(res.band.lower, 3)}"
              f"  upper {np.round(res.band.upper, 3)}")
