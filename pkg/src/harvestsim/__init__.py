"""Energy-harvesting sensor node simulator and policy library.

Submodules:
    rates          energy-to-bits maps and inverses
    distributions  seeded random variates (arrivals, harvest, fading)
    policies       per-slot transmit-energy decision rules
    node_sim       slotted single-node simulator
    mdp            quantized-state delay-optimal policy solvers
    mac            centralized multi-node slotted MAC schedulers
    csma           continuous-time contention MAC simulator
    experiments    config-driven experiment runner and bundled scenarios
"""

from .rates import RateFunction, linear_rate, log_rate
from .distributions import DistributionSpec, RandomStream, expected_g
from .policies import (NodeState, PolicySpec, SensingConfig, decide,
                       stability_bounds, solve_waterfilling_level)
from .node_sim import NodeSimConfig, SimResult, run, sweep, detect_stability

__version__ = "0.1.0"
