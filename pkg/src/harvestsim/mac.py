"""Centralized slotted MAC for N energy-harvesting nodes on one channel.

Exactly one node transmits per slot.  Schedulers: fixed-fraction TDMA
(largest-deficit slot assignment), best-gain selection, backlog-weighted
opportunistic selection, drainable-bits (greedy) selection, and the
threshold hybrid of the last two.  Per-slot energy budgets divide the mean
harvest by each node's time share, estimated online with an LMS tracker
when the scheduler does not fix the shares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .distributions import DistributionSpec, RandomStream
from .node_sim import detect_stability
from .policies import solve_waterfilling_level
from .rates import RateFunction

__all__ = [
    "MacNode",
    "SchedulerSpec",
    "MacNodeResult",
    "tdma_feasible",
    "tdma_search",
    "schedule_slot",
    "lms_update",
    "run_mac",
]

SCHEDULER_KINDS = ("tdma", "max-gain", "to-sched", "greedy-sched",
                   "modified-greedy")
ALPHA_FLOOR = 0.01  # keeps per-slot budgets finite while LMS warms up


@dataclass
class MacNode:
    """One node's traffic/energy laws plus its mutable queue state."""

    node_id: int
    x_dist: DistributionSpec
    y_dist: DistributionSpec
    h_dist: DistributionSpec
    rf: RateFunction
    q: float = 0.0
    e: float = 0.0
    alpha_hat: float = 1.0

    @property
    def mean_harvest(self) -> float:
        return self.y_dist.exact_mean


@dataclass(frozen=True)
class SchedulerSpec:
    """Scheduler family plus its transmit-energy convention.

    share_divided_budget=True spends (E[Y]-eps)/share per transmission
    (energy-neutral: long-run spend matches the harvest).  False spends the
    plain per-slot margin E[Y]-eps whenever transmitting, banking the rest;
    this is the convention behind the reported multi-queue boundaries
    (selection scores always use the share-divided form).
    """

    kind: str
    alphas: Tuple[float, ...] = ()      # tdma only
    queue_threshold: float = 0.0        # modified-greedy switch level L
    epsilon_frac: float = 0.01          # margin as a fraction of E[Y]
    use_waterfilling: bool = False
    share_divided_budget: bool = True
    lms_mu: float = 0.01
    lms_update_period: int = 40

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise ValueError(f"unknown scheduler kind {self.kind!r}")
        if self.kind == "tdma":
            if not self.alphas or abs(sum(self.alphas) - 1.0) > 1e-9:
                raise ValueError("tdma needs fractions summing to 1")
        if self.kind == "modified-greedy" and self.queue_threshold <= 0:
            raise ValueError("modified-greedy needs a positive queue threshold")
        if not (0.0 < self.lms_mu < 1.0):
            raise ValueError("lms_mu must be in (0, 1)")


def lms_update(alpha_hat: float, observed: float, mu: float) -> float:
    """One step of the share tracker: a' = a - mu * (a - observed)."""
    if not (0.0 < mu < 1.0):
        raise ValueError("mu must be in (0, 1)")
    return alpha_hat - mu * (alpha_hat - observed)


# -- TDMA feasibility ------------------------------------------------------------


def tdma_feasible(nodes: Sequence[MacNode],
                  alphas: Sequence[float]) -> List[float]:
    """Stability margin per node: alpha_i * bits_i(E[Y_i]/alpha_i) - E[X_i].

    Positive margin means the necessary TDMA stability condition holds for
    that node.
    """
    margins = []
    for node, a in zip(nodes, alphas):
        ex = node.x_dist.exact_mean
        if a <= 0.0:
            capacity = 0.0
        else:
            capacity = a * node.rf.bits(node.mean_harvest / a)
        margins.append(capacity - ex)
    return margins


def tdma_search(nodes: Sequence[MacNode], step: float = 0.01,
                ) -> Tuple[Tuple[float, ...], float]:
    """Grid search over the simplex maximizing the minimum stability margin.

    Returns (alphas, best margin); a negative margin means no feasible
    point exists on the grid.
    """
    n = len(nodes)
    if n == 1:
        return (1.0,), tdma_feasible(nodes, [1.0])[0]
    if n > 6:
        raise ValueError("grid search supports at most 6 nodes")
    ticks = round(1.0 / step)
    best_alphas, best_key = None, None
    for combo in _compositions(ticks, n):
        alphas = tuple(c / ticks for c in combo)
        # lexicographic max-min: ties on the worst margin fall through to
        # the second-worst, so symmetric inputs get balanced fractions
        key = tuple(sorted(tdma_feasible(nodes, alphas)))
        if best_key is None or key > best_key:
            best_key, best_alphas = key, alphas
    return best_alphas, best_key[0]


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


# -- per-slot scheduling -------------------------------------------------------------


def _budget(node: MacNode, spec: SchedulerSpec,
            alpha: Optional[float] = None,
            for_score: bool = False) -> float:
    ey = node.mean_harvest
    margin = ey - spec.epsilon_frac * ey
    if not for_score and not spec.share_divided_budget:
        return margin
    a = node.alpha_hat if alpha is None else alpha
    return margin / max(a, ALPHA_FLOOR)


def selection_scores(kind: str, nodes: Sequence[MacNode], spec: SchedulerSpec,
                     qs: Sequence[float], hs: Sequence[float]) -> List[float]:
    """Backlog-weighted or drainable-bits selection scores."""
    scores = []
    for node, q, h in zip(nodes, qs, hs):
        rate = node.rf.bits(h * _budget(node, spec, for_score=True))
        if kind == "to-sched":
            scores.append(q * rate)
        else:  # greedy-sched
            scores.append(min(rate, q))
    return scores


def _argmax_random_ties(scores: Sequence[float], rs: RandomStream) -> int:
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s >= best - 1e-12 * abs(best)]
    if len(tied) == 1:
        return tied[0]
    return tied[int(rs.uniform() * len(tied)) % len(tied)]


def schedule_slot(nodes: Sequence[MacNode], spec: SchedulerSpec,
                  qs: Sequence[float], hs: Sequence[float],
                  rs: RandomStream,
                  tdma_credit: Optional[np.ndarray] = None,
                  wf_levels: Optional[Sequence[float]] = None,
                  ) -> Tuple[Optional[int], float]:
    """Pick the transmitting node and its energy for one slot.

    Returns (node index or None, transmit energy).  All-empty queues under
    queue-aware schedulers transmit nothing.
    """
    kind = spec.kind
    if kind == "tdma":
        i = int(np.argmax(tdma_credit))
        tdma_credit[i] -= 1.0
        alpha = spec.alphas[i]
        t = _transmit_energy(nodes[i], spec, qs[i], hs[i], alpha,
                             wf_levels[i] if wf_levels else None)
        return i, t

    if kind == "max-gain":
        i = _argmax_random_ties(hs, rs)
        # under the share-divided convention the winner's long-run share is
        # 1/N, so it may spend N times the per-slot harvest margin
        node = nodes[i]
        budget = _budget(node, spec, alpha=1.0 / len(nodes))
        if spec.use_waterfilling and wf_levels:
            t = max(0.0, 1.0 / wf_levels[i] - 1.0 / hs[i]) if hs[i] > 0 else 0.0
        else:
            t = budget
        return i, min(t, nodes[i].e)

    if kind == "modified-greedy":
        over = [j for j, q in enumerate(qs) if q > spec.queue_threshold]
        if over:
            sub_scores = selection_scores("to-sched", nodes, spec, qs, hs)
            scores = [sub_scores[j] if j in over else -math.inf
                      for j in range(len(nodes))]
        else:
            scores = selection_scores("greedy-sched", nodes, spec, qs, hs)
    else:
        scores = selection_scores(kind, nodes, spec, qs, hs)

    if max(scores) <= 0.0:
        return None, 0.0
    i = _argmax_random_ties(scores, rs)
    t = _transmit_energy(nodes[i], spec, qs[i], hs[i], None,
                         wf_levels[i] if wf_levels else None)
    return i, t


def _transmit_energy(node: MacNode, spec: SchedulerSpec, q: float, h: float,
                     alpha: Optional[float], wf_level: Optional[float]) -> float:
    if q <= 0.0:
        return 0.0
    if spec.use_waterfilling and wf_level is not None:
        if h <= 0.0:
            return 0.0
        t = max(0.0, 1.0 / wf_level - 1.0 / h)
        t = min(t, node.rf.energy(q) / h)  # no-waste cap on short queues
    else:
        t = _budget(node, spec, alpha)
    return min(t, node.e)


# -- full MAC simulation ---------------------------------------------------------------


@dataclass
class MacNodeResult:
    mean_q: float
    mean_delay: float
    stability_verdict: str
    airtime: float
    alpha_hat: float
    arrivals_total: float
    served_total: float
    final_q: float
    harvest_total: float
    transmit_total: float
    final_e: float


def run_mac(nodes: Sequence[MacNode], spec: SchedulerSpec, horizon: int,
            seed: int, warmup: Optional[int] = None) -> List[MacNodeResult]:
    """Slotted multi-node loop; exactly one transmitter per slot."""
    n = len(nodes)
    warmup = horizon // 10 if warmup is None else warmup
    nodes = [replace(node) for node in nodes]  # private mutable copies
    rs = RandomStream(seed, 0)
    tie_rs = rs.child(999)
    xs, ys, hs = [], [], []
    for i, node in enumerate(nodes):
        xs.append(node.x_dist.sample_array(rs.child(10 + 3 * i), horizon).tolist())
        ys.append(node.y_dist.sample_array(rs.child(11 + 3 * i), horizon).tolist())
        hs.append(node.h_dist.sample_array(rs.child(12 + 3 * i), horizon).tolist())

    for i, node in enumerate(nodes):
        # tdma shares are known; the others start from the uniform guess
        node.alpha_hat = spec.alphas[i] if spec.kind == "tdma" else 1.0 / n
    tdma_credit = np.zeros(n) if spec.kind == "tdma" else None
    # channel-ordered schedulers transmit mostly at their best states, so
    # their power budget must hold under the max-of-N winning-gain law;
    # TDMA's slot assignment is channel-blind
    wf_best_of = 1 if spec.kind == "tdma" else n
    wf_levels = None
    if spec.use_waterfilling:
        wf_levels = [_solve_level(node, spec, wf_best_of) for node in nodes]

    q_hist = [[0.0] * horizon for _ in range(n)]
    wins = [0] * n
    window_wins = [0] * n
    arrivals = [0.0] * n
    served_tot = [0.0] * n
    harvest = [0.0] * n
    transmit = [0.0] * n

    for k in range(horizon):
        if tdma_credit is not None:
            tdma_credit += np.asarray(spec.alphas)
        qs = [node.q for node in nodes]
        h_now = [hs[i][k] for i in range(n)]
        winner, t = schedule_slot(nodes, spec, qs, h_now, tie_rs,
                                  tdma_credit, wf_levels)
        if winner is not None:
            node = nodes[winner]
            assert t <= node.e + 1e-9, "scheduler overdrew a battery"
            served = min(node.q, node.rf.bits(h_now[winner] * t)) if t > 0 else 0.0
            node.q -= served
            node.e -= t
            served_tot[winner] += served
            transmit[winner] += t
            wins[winner] += 1
            window_wins[winner] += 1
        for i, node in enumerate(nodes):
            node.q += xs[i][k]
            node.e += ys[i][k]
            arrivals[i] += xs[i][k]
            harvest[i] += ys[i][k]
            q_hist[i][k] = node.q
        if spec.kind != "tdma" and (k + 1) % spec.lms_update_period == 0:
            for i, node in enumerate(nodes):
                observed = window_wins[i] / spec.lms_update_period
                node.alpha_hat = lms_update(node.alpha_hat, observed,
                                            spec.lms_mu)
            window_wins = [0] * n
            if spec.use_waterfilling:
                wf_levels = [_solve_level(node, spec, wf_best_of)
                             for node in nodes]

    results = []
    for i, node in enumerate(nodes):
        post = np.asarray(q_hist[i][warmup:])
        ex = node.x_dist.exact_mean
        mean_q = float(post.mean())
        results.append(MacNodeResult(
            mean_q=mean_q,
            mean_delay=mean_q / ex if ex > 0 else 0.0,
            stability_verdict=detect_stability(post, ex),
            airtime=wins[i] / horizon,
            alpha_hat=node.alpha_hat,
            arrivals_total=arrivals[i],
            served_total=served_tot[i],
            final_q=node.q,
            harvest_total=harvest[i],
            transmit_total=transmit[i],
            final_e=node.e,
        ))
    return results


_LEVEL_CACHE: dict = {}


def _solve_level(node: MacNode, spec: SchedulerSpec, best_of: int) -> float:
    # share drifts a little every update window; rounding the budget keeps
    # the bisections to a handful per run without visible level error
    budget = float(f"{_budget(node, spec):.4g}")
    key = (node.h_dist, budget, best_of)
    if key not in _LEVEL_CACHE:
        _LEVEL_CACHE[key] = solve_waterfilling_level(
            node.h_dist, budget, tol=1e-8, best_of=best_of)
    return _LEVEL_CACHE[key]
