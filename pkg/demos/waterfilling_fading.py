"""Water filling on a fading channel, and what it buys at the system level.

With channel state information the node spends more energy in good slots:
T(h) = (1/h0 - 1/h)^+ with the threshold set by the average power budget.
Against the four-state fading law from the experiments this lifts the
achievable rate from 0.64 to 0.70 bits/slot at unit average power.
"""

import numpy as np

from harvestsim.distributions import DistributionSpec, expected_g
from harvestsim.policies import (mean_excess_power, solve_waterfilling_level,
                                 waterfilling_rate)
from harvestsim.rates import log_rate

rf = log_rate()
fading = DistributionSpec.discrete([(0.1, 0.1), (0.5, 0.3), (1.0, 0.4),
                                    (2.2, 0.2)])
budget = 0.99

h0 = solve_waterfilling_level(fading, budget)
print(f"water-level threshold h0 = {h0:.6f} "
      f"(spend nothing below it)\n")

print(f"{'gain':>6} {'T(h)':>8} {'bits':>8}   constant-power bits")
for h in (0.1, 0.5, 1.0, 2.2):
    t = max(0.0, 1.0 / h0 - 1.0 / h)
    print(f"{h:6.1f} {t:8.3f} {rf.bits(h * t):8.3f}   "
          f"{rf.bits(h * budget):8.3f}")

wf = waterfilling_rate(fading, rf, h0)
values, probs = fading.atoms()
const = float(np.dot([rf.bits(h * budget) for h in values], probs))
print(f"\naverage rate: water filling {wf:.4f} vs constant power {const:.4f}")
print(f"budget check: E[T(h)] = {mean_excess_power(fading, 1/h0):.6f} "
      f"(target {budget})")
