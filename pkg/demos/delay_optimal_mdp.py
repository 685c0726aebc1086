"""Delay-optimal power control as a finite decision problem.

Quantize (queue, battery) to a grid, solve for the policy minimizing the
long-run mean queue, and compare it with the closed-form rules.  Also
shows the discounted values converging to the average cost.
"""

from dataclasses import replace

import numpy as np

from harvestsim.distributions import DistributionSpec
from harvestsim.mdp import (MdpConfig, build_transition, greedy_policy_table,
                            policy_iteration, relative_value_iteration)
from harvestsim.rates import linear_rate, log_rate


def pmf(rate, cap=5):
    values, probs = DistributionSpec.truncated_poisson(rate, cap).atoms()
    return tuple((float(v), float(p)) for v, p in zip(values, probs))


# linear rate map: greedy (drain what you can) is provably optimal; the
# boundary drop penalty keeps the finite grid faithful to that structure
cfg = MdpConfig(rf=linear_rate(1.0), x_pmf=pmf(0.8), y_pmf=pmf(1.0),
                q_cap=20, e_cap=20, alpha=0.95).with_boundary_penalty()
kernel = build_transition(cfg)
opt = policy_iteration(cfg, kernel)
greedy = greedy_policy_table(cfg, kernel)
print("linear map: optimal == greedy at every state:",
      np.array_equal(opt.policy, greedy))

# concave rate map: serving a long queue all at once is wasteful, so the
# optimal rule banks energy and the greedy table is no longer optimal
cfg_log = MdpConfig(rf=log_rate(log_base=2.0), x_pmf=pmf(0.8),
                    y_pmf=pmf(1.0), q_cap=20, e_cap=20, alpha=0.95)
kernel_log = build_transition(cfg_log)
opt_log = policy_iteration(cfg_log, kernel_log)
print("log map: transmit energy at battery=10 as the queue grows:")
print("  queue :", list(range(0, 11)))
print("  energy:", [float(a) for a in
                    kernel_log.actions[opt_log.policy[:11, 10]]])

# average cost and the alpha -> 1 limit
rvi = relative_value_iteration(cfg_log, kernel_log, tol=1e-8)
print(f"\naverage queue length of the optimal rule: {rvi.avg_cost:.4f}")
for alpha in (0.9, 0.99, 0.999):
    sol = policy_iteration(replace(cfg_log, alpha=alpha), kernel_log)
    lim = (1 - alpha) * sol.value.min()
    print(f"  (1-a) inf v_a at a={alpha}: {lim:.4f} "
          f"(gap {abs(lim - rvi.avg_cost):.5f})")
