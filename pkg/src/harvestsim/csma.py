"""Continuous-time CSMA with channel- and queue-aware backoff.

N nodes share one collision domain.  When the channel goes idle, every
backlogged node that can afford a whole packet draws a backoff; the earliest
expiry transmits the full packet, and any other expiry within the sensing
window of the winner's collides with it (colliding packets are retried,
their energy is spent).  Fading is block-constant per contention round per
node.  Losses come only from data-buffer overflow at arrival instants.

Backoff families (f(x) = beta / x, clamped to [0, tau_max]):
    exponential-baseline   binary exponential, channel/queue blind
    channel-aware          f(bits at this round's gain and budget)
    queue-channel-aware    f(queue length * those bits)
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .distributions import DistributionSpec, RandomStream
from .mac import lms_update
from .policies import solve_waterfilling_level
from .rates import RateFunction

__all__ = [
    "BackoffSpec",
    "CsmaConfig",
    "CsmaNodeResult",
    "backoff_time",
    "calibrate_beta",
    "run_csma",
]

BACKOFF_KINDS = ("exponential-baseline", "channel-aware",
                 "queue-channel-aware")


@dataclass(frozen=True)
class BackoffSpec:
    kind: str
    beta_policy: float = 1.0
    tau_max: float = 20.0
    use_waterfilling: bool = False
    base_window: float = 3.1    # baseline initial window; mean backoff W/2

    def __post_init__(self):
        if self.kind not in BACKOFF_KINDS:
            raise ValueError(f"unknown backoff kind {self.kind!r}")
        if self.tau_max <= 0 or self.beta_policy <= 0:
            raise ValueError("tau_max and beta_policy must be positive")


@dataclass(frozen=True)
class CsmaConfig:
    """Shared-channel contention setup.

    contention_jitter adds a uniform dither to every backoff draw: discrete
    fading laws give only a handful of distinct backoff values, and exactly
    tied expiries would otherwise collide every round.  The dither is small
    enough to keep the score ordering between distinct fading states.
    """

    n_nodes: int
    arrival_rate: float             # packets per node per slot (Poisson)
    y_dist: DistributionSpec
    h_dist: DistributionSpec
    rf: RateFunction
    packet_size: float = 1.0        # bits per packet
    data_buffer_cap: int = 50       # packets
    sensing_window: float = 0.005   # slots; expiries this close collide
    contention_jitter: float = 0.25  # slots of uniform backoff dither
    max_tx_duration: float = 2.0    # TXOP cap, slots; slower states defer
    fading_coherence: float = 1.0   # slots a drawn gain (and backoff) persists
    horizon: float = 20_000.0       # slots
    seed: int = 0
    epsilon_frac: float = 0.01
    lms_mu: float = 0.01
    lms_update_period: float = 40.0  # slots between share updates

    def __post_init__(self):
        if self.sensing_window < 0 or self.contention_jitter < 0:
            raise ValueError("sensing_window and jitter must be >= 0")
        if self.packet_size <= 0:
            raise ValueError("packet_size must be positive")
        if self.data_buffer_cap < 1:
            raise ValueError("data_buffer_cap must be >= 1 packet")


def backoff_time(q: float, h: float, mean_harvest: float, alpha_hat: float,
                 spec: BackoffSpec, rf: RateFunction) -> float:
    """Reciprocal backoff from the node's priority score.

    Score is the deliverable bits at this round's gain under the per-slot
    budget (channel-aware), optionally weighted by the queue length.  A
    zero score waits the maximum backoff.
    """
    budget = (mean_harvest * (1.0 - 0.01)) / max(alpha_hat, 1e-9)
    rate = rf.bits(h * budget) if h > 0 else 0.0
    score = rate if spec.kind == "channel-aware" else q * rate
    if score <= 0.0:
        return spec.tau_max
    return min(max(spec.beta_policy / score, 0.0), spec.tau_max)


def calibrate_beta(score_samples: Sequence[float], target_mean: float,
                   tau_max: float) -> float:
    """Bisect the backoff scale so E[clamp(beta/score, 0, tau_max)] hits
    the target mean under the supplied stationary score draws."""
    scores = np.asarray(score_samples, dtype=float)
    if target_mean <= 0:
        raise ValueError("target mean backoff must be positive")
    if target_mean >= tau_max:
        raise ValueError(
            f"target {target_mean} not reachable: clamping at tau_max="
            f"{tau_max} caps the mean below it")
    floor_mean = tau_max * float(np.mean(scores <= 0.0))
    if target_mean <= floor_mean:
        raise ValueError("zero-score mass alone exceeds the target mean")
    pos = scores[scores > 0.0]
    zero_frac = 1.0 - len(pos) / len(scores)

    def mean_backoff(beta):
        return (float(np.minimum(beta / pos, tau_max).mean())
                * (1.0 - zero_frac) + tau_max * zero_frac)

    lo, hi = 0.0, 1.0
    while mean_backoff(hi) < target_mean:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("target mean backoff unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_backoff(mid) < target_mean:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class CsmaNodeResult:
    mean_delay: float               # slots, per served packet
    loss_probability: float         # dropped / offered
    airtime: float                  # fraction of time transmitting
    collisions: int                 # rounds this node collided in
    arrivals: int
    served: int
    dropped: int
    final_queue: int
    harvest_total: float
    energy_spent: float
    final_energy: float
    alpha_hat: float


class _Node:
    __slots__ = ("idx", "queue", "dropped", "arrivals", "served", "delays",
                 "energy", "harvest_total", "energy_spent", "alpha_hat",
                 "window", "airtime", "window_airtime", "collisions",
                 "arrival_times", "next_arrival", "h_stream", "b_stream",
                 "wf_level", "counter", "t_energy", "duration")

    def __init__(self, idx, arrival_times, h_stream, b_stream, n_nodes):
        self.idx = idx
        self.queue = deque()      # arrival time of each queued packet
        self.dropped = 0
        self.arrivals = 0
        self.served = 0
        self.delays = []
        self.energy = 0.0
        self.harvest_total = 0.0
        self.energy_spent = 0.0
        self.alpha_hat = 1.0 / n_nodes
        self.window = 0.0         # baseline binary-exponential window
        self.airtime = 0.0
        self.window_airtime = 0.0
        self.collisions = 0
        self.arrival_times = arrival_times
        self.next_arrival = 0
        self.h_stream = h_stream
        self.b_stream = b_stream
        self.wf_level = 0.0
        # frozen contention state: remaining backoff plus the energy rate
        # and duration fixed when the backoff was drawn
        self.counter = None
        self.t_energy = 0.0
        self.duration = 0.0


def run_csma(cfg: CsmaConfig,
             spec: BackoffSpec) -> Tuple[List[CsmaNodeResult], int]:
    """Event loop with freezing backoff counters; deterministic under
    cfg.seed.  Returns per-node results and the number of collision rounds.

    A backlogged node that can afford a whole packet draws a backoff once
    (freezing the fading state with it); the counter runs only while the
    channel is idle and freezes during transmissions, so contention waits
    drain in parallel across nodes.  Participants of a transmission or
    collision redraw afterwards.
    """
    rs = RandomStream(cfg.seed, 0)
    n = cfg.n_nodes
    horizon = cfg.horizon
    n_slots = int(math.ceil(horizon)) + 1

    nodes: List[_Node] = []
    harvests = []
    for i in range(n):
        # Poisson stream: exponential gaps at the configured rate
        gaps_rs = rs.child(100 + 4 * i)
        expected = max(int(cfg.arrival_rate * horizon * 1.5), 64)
        gaps = -np.log(np.maximum(gaps_rs.uniforms(expected), 1e-300)) / max(
            cfg.arrival_rate, 1e-12)
        times = np.cumsum(gaps)
        while cfg.arrival_rate > 0 and times[-1] < horizon:
            more = -np.log(np.maximum(gaps_rs.uniforms(expected), 1e-300)
                           ) / cfg.arrival_rate
            times = np.concatenate([times, times[-1] + np.cumsum(more)])
        node = _Node(i, times[times < horizon],
                     rs.child(101 + 4 * i), rs.child(102 + 4 * i), n)
        node.window = spec.base_window
        nodes.append(node)
        harvests.append(cfg.y_dist.sample_array(rs.child(103 + 4 * i),
                                                n_slots).tolist())

    if spec.use_waterfilling:
        for node in nodes:
            node.wf_level = _solve_level(cfg, node)

    t = 0.0
    harvested_slots = [0] * n
    next_share_update = cfg.lms_update_period
    collision_rounds = 0
    window_busy = 0.0  # channel-busy time in the current share window

    def advance_node(node: _Node, now: float):
        # arrivals in (…, now]; drops happen at full-buffer arrival instants
        at = node.arrival_times
        while node.next_arrival < len(at) and at[node.next_arrival] <= now:
            node.arrivals += 1
            if len(node.queue) < cfg.data_buffer_cap:
                node.queue.append(at[node.next_arrival])
            else:
                node.dropped += 1
            node.next_arrival += 1
        # harvest lands at slot boundaries
        k = harvested_slots[node.idx]
        full = min(int(now), n_slots - 1)
        while k < full:
            node.energy += harvests[node.idx][k]
            node.harvest_total += harvests[node.idx][k]
            k += 1
        harvested_slots[node.idx] = k

    def draw_backoff(node: _Node):
        h = cfg.h_dist.sample(node.h_stream)
        t_energy, duration = _packet_demand(cfg, spec, node, h)
        jitter = node.b_stream.uniform() * cfg.contention_jitter
        if duration is None:
            # unusable fading state (below the water threshold or over the
            # TXOP cap); re-sense after the next fading coherence block
            node.counter = cfg.fading_coherence + jitter
            node.duration = 0.0
            node.t_energy = 0.0
            return
        if node.energy + 1e-12 < t_energy * duration:
            node.counter = None  # defers; re-checked after each harvest
            return
        if spec.kind == "exponential-baseline":
            tau = min(node.b_stream.uniform() * node.window, spec.tau_max)
        else:
            # score from the rate this transmission would actually get
            # (equals the budgeted-rate score without waterfilling)
            rate = cfg.packet_size / duration
            score = rate if spec.kind == "channel-aware" else (
                len(node.queue) * rate)
            tau = min(spec.beta_policy / score, spec.tau_max)
        node.counter = tau + jitter
        node.t_energy = t_energy
        node.duration = duration

    while t < horizon:
        if t >= next_share_update:
            # a node's share is its airtime relative to the channel's busy
            # time (all nodes hear every transmission), not to wall time;
            # wall-time shares starve the energy budget at light load
            if window_busy > 0.0:
                for node in nodes:
                    observed = node.window_airtime / window_busy
                    node.alpha_hat = lms_update(node.alpha_hat, observed,
                                                cfg.lms_mu)
                    node.window_airtime = 0.0
                    if spec.use_waterfilling:
                        node.wf_level = _solve_level(cfg, node)
            window_busy = 0.0
            next_share_update += cfg.lms_update_period

        for node in nodes:
            advance_node(node, t)
            if node.counter is None and node.queue:
                draw_backoff(node)

        active = [node for node in nodes if node.counter is not None]
        if not active:
            t = _next_wakeup(t, nodes, horizon)
            continue

        # idle until the earliest counter expiry, unless a new contender
        # can join first (arrival or harvest at a slot boundary)
        expiry = min(node.counter for node in active)
        join_at = _next_wakeup(t, nodes, horizon)
        step = min(expiry, join_at - t, horizon - t, next_share_update - t)
        if step > 1e-12 and step < expiry:
            for node in active:
                node.counter -= step
            t += step
            continue

        start = t + expiry
        if start >= horizon:
            t = horizon
            break
        due = [node for node in active
               if node.counter <= expiry + cfg.sensing_window]
        for node in active:
            node.counter -= expiry
        colliding = []
        for node in due:
            if node.duration > 0.0:
                colliding.append(node)
            else:
                node.counter = None  # coherence block over; sense afresh
        if not colliding:
            t = start
            continue

        if len(colliding) > 1:
            collision_rounds += 1
            busy_until = start
            for node in colliding:
                node.energy -= node.t_energy * node.duration
                node.energy_spent += node.t_energy * node.duration
                node.collisions += 1
                node.window_airtime += node.duration
                node.counter = None
                if spec.kind == "exponential-baseline":
                    node.window = min(node.window * 2.0, spec.tau_max)
                busy_until = max(busy_until, start + node.duration)
            window_busy += busy_until - start
            t = busy_until
            continue

        winner = colliding[0]
        winner.energy -= winner.t_energy * winner.duration
        winner.energy_spent += winner.t_energy * winner.duration
        arrived_at = winner.queue.popleft()
        finish = start + winner.duration
        winner.delays.append(finish - arrived_at)
        winner.served += 1
        winner.airtime += winner.duration
        winner.window_airtime += winner.duration
        window_busy += winner.duration
        winner.counter = None
        if spec.kind == "exponential-baseline":
            winner.window = spec.base_window
        t = finish

    for node in nodes:
        advance_node(node, horizon)

    results = []
    for node in nodes:
        assert node.energy > -1e-9, "battery went negative"
        results.append(CsmaNodeResult(
            mean_delay=float(np.mean(node.delays)) if node.delays else math.nan,
            loss_probability=(node.dropped / node.arrivals
                              if node.arrivals else 0.0),
            airtime=node.airtime / horizon,
            collisions=node.collisions,
            arrivals=node.arrivals,
            served=node.served,
            dropped=node.dropped,
            final_queue=len(node.queue),
            harvest_total=node.harvest_total,
            energy_spent=node.energy_spent,
            final_energy=node.energy,
            alpha_hat=node.alpha_hat,
        ))
    return results, collision_rounds


def _packet_demand(cfg: CsmaConfig, spec: BackoffSpec, node: _Node,
                   h: float) -> Tuple[float, Optional[float]]:
    """(energy per slot, transmission slots) for one whole packet at gain h."""
    ey = cfg.y_dist.exact_mean
    if spec.use_waterfilling:
        if h <= 0.0:
            return 0.0, None
        t_energy = max(0.0, 1.0 / node.wf_level - 1.0 / h)
        if t_energy <= 0.0:
            return 0.0, None
    else:
        t_energy = ey * (1.0 - cfg.epsilon_frac) / max(node.alpha_hat, 1e-9)
    rate = cfg.rf.bits(h * t_energy) if h > 0 else 0.0
    if rate <= 0.0:
        return t_energy, None
    duration = cfg.packet_size / rate
    if duration > cfg.max_tx_duration:
        return t_energy, None
    return t_energy, duration


def _next_wakeup(t: float, nodes: Sequence[_Node], horizon: float) -> float:
    """Earliest future arrival or slot boundary (battery refill)."""
    nxt = math.floor(t) + 1.0
    for node in nodes:
        if node.next_arrival < len(node.arrival_times):
            nxt = min(nxt, float(node.arrival_times[node.next_arrival]))
    return min(max(nxt, t + 1e-9), horizon)


_LEVEL_CACHE: dict = {}


def _solve_level(cfg: CsmaConfig, node: _Node) -> float:
    budget = cfg.y_dist.exact_mean * (1.0 - cfg.epsilon_frac) / max(
        node.alpha_hat, 0.01)
    budget = float(f"{budget:.4g}")
    key = (cfg.h_dist, budget)
    if key not in _LEVEL_CACHE:
        _LEVEL_CACHE[key] = solve_waterfilling_level(cfg.h_dist, budget,
                                                     tol=1e-8)
    return _LEVEL_CACHE[key]
