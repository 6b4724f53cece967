"""
Serving a band period by period
===============================

The operator reveals one setpoint per period.  Each inner model carries a
certificate (SoC box, power envelopes or a scenario tree) that lets the
dispatch stay safe without seeing the future.  A band from the two-stage
relaxation has no such certificate and can strand the storage.
"""

import itertools

from flexagg import aggregate, example2, run_rolling, sample_trajectory, toy5
from flexagg.disaggregation import DispatchInfeasibleError

case = toy5(T=6)
res = aggregate(case, "rectangular")
traj = sample_trajectory(res.band, seed=1, mode="adversarial")
log = run_rolling(case, res, traj)
print(f"{case.name}: served {len(log.periods)} periods, cost {log.total_cost:.2f}")
print("SoC per ESS (MWh):")
print(log.soc_trajectory.round(3))

# Same trajectory with and without the cost objective.
base = run_rolling(case, res, traj, "rectangular-baseline")
print(f"cost-minimizing {log.total_cost:.2f} vs feasibility-only {base.total_cost:.2f}")

# Two-stage band on the two-node system: some vertex trajectories cannot be
# followed by any dispatch that only knows the past.
case = example2()
ts = aggregate(case, "two_stage")
for pattern in itertools.product((0, 1), repeat=2):
    p = ts.band.vertex(pattern)
    try:
        run_rolling(case, ts, p, "myopic")
        print(f"setpoints {p}: served")
    except DispatchInfeasibleError as exc:
        print(f"setpoints {p}: {exc}")
