"""Three harvesting nodes share one channel: who should talk each slot?

Fixed TDMA ignores both queues and fading; the opportunistic schedulers
pick the node with the best backlog-weighted or drainable-bits score and
so ride the multiuser diversity of independent fading.
"""

import numpy as np

from harvestsim.distributions import DistributionSpec
from harvestsim.mac import MacNode, SchedulerSpec, run_mac, tdma_search
from harvestsim.rates import log_rate

rf = log_rate()


def nodes(ex):
    return [MacNode(node_id=i, x_dist=DistributionSpec.exponential(ex),
                    y_dist=DistributionSpec.exponential(1.0),
                    h_dist=DistributionSpec.exponential(1.0), rf=rf)
            for i in range(3)]


alphas, margin = tdma_search(nodes(0.3), step=0.05)
print(f"TDMA fraction search (symmetric): {alphas}, margin {margin:.3f}\n")

specs = {
    "tdma": SchedulerSpec(kind="tdma", alphas=(1 / 3,) * 3),
    "backlog-weighted": SchedulerSpec(kind="to-sched"),
    "drainable-bits": SchedulerSpec(kind="greedy-sched"),
    "drainable + wf": SchedulerSpec(kind="greedy-sched",
                                    use_waterfilling=True),
}

print(f"{'E[X]':>5} | " + " | ".join(f"{n:>17}" for n in specs))
for ex in (0.25, 0.35, 0.45, 0.55):
    cells = []
    for spec in specs.values():
        res = run_mac(nodes(ex), spec, horizon=100_000, seed=5)
        q = np.mean([r.mean_q for r in res])
        worst = max(r.stability_verdict for r in res)
        cells.append(f"{q:13.1f} ({worst[0].upper()})")
    print(f"{ex:5.2f} | " + " | ".join(f"{c:>17}" for c in cells))

print("\nTDMA's fixed slots go unstable first; the queue-aware schedulers")
print("hold on much longer because the transmitting node is usually one")
print("with a good channel draw.")
