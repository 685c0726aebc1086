"""Slotted single-node simulator.

Per-slot order of operations: observe (q, E, h) -> sense (deduct z) ->
decide transmit energy -> serve bits(h*T) -> add arrivals x and harvest y.
Arrivals during slot k become eligible in slot k+1, which the update
q' = (q - served)^+ + x realizes.  Sensing has priority over transmission:
if the battery cannot cover z the node senses partially and does not
transmit that slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import DistributionSpec, RandomStream
from .policies import NodeState, PolicySpec, decide
from .rates import RateFunction

__all__ = [
    "NodeSimConfig",
    "SimResult",
    "step",
    "run",
    "sweep",
    "detect_stability",
    "boundary_from_verdicts",
    "measure_boundary",
]

STABLE, UNSTABLE, INCONCLUSIVE = "stable", "unstable", "inconclusive"

# Stream tags for the per-run variate arrays (fixed so that every policy
# sees identical draws under a common seed).
_TAG_X, _TAG_Y, _TAG_Z, _TAG_H = 1, 2, 3, 4


@dataclass(frozen=True)
class NodeSimConfig:
    x_dist: DistributionSpec
    y_dist: DistributionSpec
    rf: RateFunction
    policy: object                  # PolicySpec or anything with decision_fn(rf)
    z_dist: Optional[DistributionSpec] = None
    h_dist: Optional[DistributionSpec] = None
    data_buffer_cap: float = math.inf
    energy_buffer_cap: float = math.inf
    horizon: int = 1_000_000
    warmup: Optional[int] = None    # defaults to 10% of horizon
    seed: int = 0
    stream_id: int = 0
    q0: float = 0.0
    e0: float = 0.0
    quantize_step: float = 0.0      # >0: round (q, E) to this grid each slot
    keep_trace: bool = False
    track_fifo_delay: bool = False

    def __post_init__(self):
        wu = self.effective_warmup
        if not (0 <= wu < self.horizon):
            raise ValueError("need 0 <= warmup < horizon")
        if self.data_buffer_cap <= 0 or self.energy_buffer_cap <= 0:
            raise ValueError("buffer caps must be positive")
        if (isinstance(self.policy, PolicySpec)
                and self.policy.kind == "unbuffered"
                and self.z_dist is not None):
            raise ValueError("unbuffered policy does not support sensing drain")
        if self.track_fifo_delay and math.isfinite(self.data_buffer_cap):
            raise ValueError("FIFO delay tracking needs an unbounded data buffer")

    @property
    def effective_warmup(self) -> int:
        return self.horizon // 10 if self.warmup is None else self.warmup


@dataclass
class SimResult:
    mean_q: float
    mean_delay: float
    wasted_energy_rate: float
    drop_rate: float
    stability_verdict: str
    # exact bookkeeping, over the whole run (warmup included)
    arrivals_total: float = 0.0
    served_total: float = 0.0
    dropped_total: float = 0.0
    final_q: float = 0.0
    harvest_total: float = 0.0
    transmit_total: float = 0.0
    sense_total: float = 0.0
    energy_overflow_total: float = 0.0
    final_e: float = 0.0
    fifo_delay: float = math.nan
    trace: Optional[dict] = None


def _compile_policy(policy, rf: RateFunction) -> Callable:
    """Specialized (q, E, h, y) -> T closure for the hot loop.

    Mirrors policies.decide(); test_node_sim cross-checks the two on
    random states for every kind.
    """
    if not isinstance(policy, PolicySpec):
        return policy.decision_fn(rf)
    k = policy.kind
    if k == "unbuffered":
        return lambda q, E, h, y: y
    if k in ("to", "unfaded-to"):
        t_target = policy.mean_harvest - policy.epsilon
        return lambda q, E, h, y: E if E < t_target else t_target
    if k == "greedy":
        energy = rf.energy
        return lambda q, E, h, y: min(E, energy(q))
    if k == "mto":
        energy, ey, c = rf.energy, policy.mean_harvest, policy.c_mto
        def mto(q, E, h, y):
            surplus = E - c * q
            cap = 0.99 * (ey + 0.001 * (surplus if surplus > 0.0 else 0.0))
            return min(energy(q), E, cap)
        return mto
    if k == "wf":
        inv_h0 = 1.0 / policy.h0
        def wf(q, E, h, y):
            if h <= 0.0:
                return 0.0
            t = inv_h0 - 1.0 / h
            if t <= 0.0:
                return 0.0
            return t if t < E else E
        return wf
    if k == "mwf":
        energy, inv_h0, c = rf.energy, 1.0 / policy.h0, policy.c_mto
        def mwf(q, E, h, y):
            if q <= 0.0:
                return 0.0
            inv_h = math.inf if h <= 0.0 else 1.0 / h
            surplus = E - c * q
            level = (inv_h0 - inv_h) + 0.001 * (surplus if surplus > 0.0 else 0.0)
            if level <= 0.0:
                return 0.0
            return min(energy(q), E, level)
        return mwf
    if k == "fading-linear-to":
        hbar, t_bar = policy.hbar, (policy.mean_harvest - policy.epsilon) / policy.p_hbar
        return lambda q, E, h, y: (E if E < t_bar else t_bar) if h == hbar else 0.0
    if k == "constant-rate":
        c = policy.c_rate
        return lambda q, E, h, y: E if E < c else c
    raise AssertionError(k)


def step(s: NodeState, x: float, y: float, z: float, h: float,
         cfg: NodeSimConfig) -> NodeState:
    """One slot of the queue/battery recurrences under cfg.policy."""
    unbuffered = isinstance(cfg.policy, PolicySpec) and cfg.policy.kind == "unbuffered"
    q2, e2, *_ = _slot(s.q, s.E, x, y, z, h, cfg,
                       _compile_policy(cfg.policy, cfg.rf), unbuffered)
    return NodeState(q2, e2)


def _slot(q: float, E: float, x: float, y: float, z: float, h: float,
          cfg: NodeSimConfig, policy_fn: Callable, unbuffered: bool = False):
    rf = cfg.rf
    z_eff = z if z <= E else E
    e_avail = E - z_eff
    if z_eff < z:
        t = 0.0  # battery could not cover sensing; skip transmission
    else:
        t = policy_fn(q, e_avail, h, y)
    assert unbuffered or t <= e_avail + 1e-9, \
        f"policy overdraws battery: T={t}, available={e_avail}"

    if t > 0.0 and h > 0.0:
        capacity = rf.bits(h * t)
    else:
        capacity = 0.0
    served = capacity if capacity <= q else q
    waste = 0.0
    if t > 0.0:
        if capacity > q:
            waste = t - rf.energy(q) / h  # energy beyond what the queue needed
        elif h <= 0.0:
            waste = t

    q_next = q - served + x
    dropped = q_next - cfg.data_buffer_cap
    if dropped > 0.0:
        q_next = cfg.data_buffer_cap
    else:
        dropped = 0.0

    e_next = e_avail - t + y
    overflow = e_next - cfg.energy_buffer_cap
    if overflow > 0.0:
        e_next = cfg.energy_buffer_cap
    else:
        overflow = 0.0

    if cfg.quantize_step > 0.0:
        step_sz = cfg.quantize_step
        q_next = math.floor(q_next / step_sz + 0.5) * step_sz
        e_next = math.floor(e_next / step_sz + 0.5) * step_sz
        if q_next > cfg.data_buffer_cap:
            q_next = cfg.data_buffer_cap
        if e_next > cfg.energy_buffer_cap:
            e_next = cfg.energy_buffer_cap

    return q_next, e_next, t, served, z_eff, waste, overflow, dropped


def run(cfg: NodeSimConfig) -> SimResult:
    """Simulate cfg.horizon slots; statistics over slots after warmup."""
    horizon, warmup = cfg.horizon, cfg.effective_warmup
    rs = RandomStream(cfg.seed, cfg.stream_id)
    # plain-float lists: scalar loop arithmetic on np.float64 is much slower
    xs = cfg.x_dist.sample_array(rs.child(_TAG_X), horizon).tolist()
    ys = cfg.y_dist.sample_array(rs.child(_TAG_Y), horizon).tolist()
    zs = (cfg.z_dist.sample_array(rs.child(_TAG_Z), horizon).tolist()
          if cfg.z_dist is not None else None)
    hs = (cfg.h_dist.sample_array(rs.child(_TAG_H), horizon).tolist()
          if cfg.h_dist is not None else None)

    policy_fn = _compile_policy(cfg.policy, cfg.rf)
    unbuffered = isinstance(cfg.policy, PolicySpec) and cfg.policy.kind == "unbuffered"
    q, E = cfg.q0, cfg.e0
    q_samples = [0.0] * horizon
    arrivals = served_tot = dropped_tot = 0.0
    harvest = transmit = sense = overflow_tot = 0.0
    waste_post = overflow_post = 0.0
    served_list = [0.0] * horizon if cfg.track_fifo_delay else None
    trace_q = [0.0] * horizon if cfg.keep_trace else None
    trace_e = [0.0] * horizon if cfg.keep_trace else None
    trace_t = [0.0] * horizon if cfg.keep_trace else None
    slot = _slot

    for k in range(horizon):
        x = xs[k]
        y = ys[k]
        z = zs[k] if zs is not None else 0.0
        h = hs[k] if hs is not None else 1.0
        q, E, t, served, z_eff, waste, overflow, dropped = slot(
            q, E, x, y, z, h, cfg, policy_fn, unbuffered)
        q_samples[k] = q
        arrivals += x
        served_tot += served
        dropped_tot += dropped
        harvest += y
        transmit += t
        sense += z_eff
        overflow_tot += overflow
        if k >= warmup:
            waste_post += waste
            overflow_post += overflow
        if served_list is not None:
            served_list[k] = served
        if trace_q is not None:
            trace_q[k] = q
            trace_e[k] = E
            trace_t[k] = t
    q_samples = np.asarray(q_samples)
    served_arr = np.asarray(served_list) if served_list is not None else None

    n_meas = horizon - warmup
    post = q_samples[warmup:]
    mean_q = float(post.mean())
    ex = cfg.x_dist.exact_mean
    mean_delay = mean_q / ex if ex > 0 else 0.0
    verdict = detect_stability(post, ex)

    result = SimResult(
        mean_q=mean_q,
        mean_delay=mean_delay,
        wasted_energy_rate=(waste_post + overflow_post) / n_meas,
        drop_rate=dropped_tot / horizon,
        stability_verdict=verdict,
        arrivals_total=arrivals,
        served_total=served_tot,
        dropped_total=dropped_tot,
        final_q=q,
        harvest_total=harvest,
        transmit_total=transmit,
        sense_total=sense,
        energy_overflow_total=overflow_tot,
        final_e=E,
    )
    if cfg.track_fifo_delay:
        result.fifo_delay = _fifo_delay(np.asarray(xs), served_arr)
    if cfg.keep_trace:
        result.trace = {"q": np.asarray(trace_q), "E": np.asarray(trace_e),
                        "T": np.asarray(trace_t)}
    return result


def _fifo_delay(arrivals: np.ndarray, served: np.ndarray) -> float:
    """Slot-resolution per-bit FIFO delay (cross-check for Little's law).

    A bit at cumulative-arrival position p departs in the first slot where
    cumulative service reaches p; bits still queued at the horizon are
    excluded.
    """
    ca = np.cumsum(arrivals)
    cs = np.cumsum(served)
    slots = np.arange(len(ca))
    depart = np.searchsorted(cs, ca, side="left")
    done = depart < len(cs)
    weights = arrivals[done]
    if weights.sum() <= 0:
        return math.nan
    delays = depart[done] - slots[done] + 1  # eligible for service next slot
    return float(np.average(delays, weights=weights))


def detect_stability(q_samples: Sequence[float], arrival_mean: float,
                     n_windows: int = 10, theta: float = 0.01,
                     rel_band: float = 0.2) -> str:
    """Heuristic verdict from post-warmup queue samples.

    Fits the growth rate of window means; growth above theta * arrival_mean
    bits/slot reads as unstable, a flat fit whose last window sits within
    rel_band of the overall mean reads as stable, anything else is
    inconclusive.
    """
    q_samples = np.asarray(q_samples, dtype=float)
    if n_windows < 4 or len(q_samples) < 4 * n_windows:
        return INCONCLUSIVE
    win = len(q_samples) // n_windows
    means = q_samples[:win * n_windows].reshape(n_windows, win).mean(axis=1)
    centers = (np.arange(n_windows) + 0.5) * win
    slope = np.polyfit(centers, means, 1)[0]  # bits per slot

    growth_tol = theta * arrival_mean if arrival_mean > 0 else 1e-12
    if slope > growth_tol:
        return UNSTABLE
    overall = means.mean()
    if abs(means[-1] - overall) <= rel_band * overall + 1e-9:
        return STABLE
    return INCONCLUSIVE


def sweep(cfg: NodeSimConfig, arrival_means: Sequence[float]) -> List[SimResult]:
    """One run per arrival mean; identical seeds give common random numbers."""
    if not len(arrival_means):
        raise ValueError("arrival_means must be nonempty")
    return [run(replace(cfg, x_dist=cfg.x_dist.scaled_to(m)))
            for m in arrival_means]


def boundary_from_verdicts(means: Sequence[float],
                           verdicts: Sequence[str]) -> float:
    """Stability boundary estimate from verdicts along an increasing grid.

    Midpoint between the last stable point below the first unstable point
    and that first unstable point; inconclusive points widen the bracket.
    """
    means = list(means)
    first_unstable = next((i for i, v in enumerate(verdicts) if v == UNSTABLE),
                          None)
    if first_unstable is None:
        return means[-1]  # no instability seen up to the end of the grid
    stable_below = [i for i in range(first_unstable)
                    if verdicts[i] == STABLE]
    if not stable_below:
        return means[0]
    return 0.5 * (means[stable_below[-1]] + means[first_unstable])


def measure_boundary(cfg: NodeSimConfig,
                     arrival_means: Sequence[float]) -> Tuple[float, list]:
    results = sweep(cfg, arrival_means)
    verdicts = [r.stability_verdict for r in results]
    return boundary_from_verdicts(arrival_means, verdicts), results
