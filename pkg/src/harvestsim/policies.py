"""Transmission policies: state (and channel) to transmit energy per slot.

Every decision function is pure and never overdraws the battery.  The
throughput-oriented policy (TO) spends the mean harvest each slot; greedy
spends just enough to drain the queue; the modified variants avoid wasting
energy on short queues and spend surplus battery; water-filling adapts to
the channel gain under an average-power budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special

from .distributions import DistributionSpec, expected_g
from .rates import RateFunction

__all__ = [
    "NodeState",
    "PolicySpec",
    "SensingConfig",
    "decide",
    "decide_to",
    "decide_greedy",
    "decide_mto",
    "decide_wf",
    "decide_mwf",
    "decide_fading_linear_to",
    "decide_constant_rate",
    "find_min_rate_constant",
    "stability_bounds",
    "mean_excess_power",
    "solve_waterfilling_level",
    "waterfilling_rate",
]

POLICY_KINDS = ("unbuffered", "to", "greedy", "mto", "unfaded-to",
                "fading-linear-to", "wf", "mwf", "constant-rate")

# Eq.-6-style correction constants; literal values, not rescaled with E[Y]
MTO_CAP_FACTOR = 0.99
SURPLUS_GAIN = 0.001


@dataclass(frozen=True)
class NodeState:
    """Data queue length in bits and stored energy."""

    q: float
    E: float

    def __post_init__(self):
        if not (self.q >= 0 and self.E >= 0):
            raise ValueError(f"queue and energy must be >= 0, got {self}")
        if not (math.isfinite(self.q) and math.isfinite(self.E)):
            raise ValueError(f"queue and energy must be finite, got {self}")


@dataclass(frozen=True)
class PolicySpec:
    """One transmission policy with its parameters.

    epsilon defaults to 1% of the mean harvest for the policies that
    hold back a stability margin.
    """

    kind: str
    rf: RateFunction
    mean_harvest: float = 0.0
    epsilon: float = 0.0
    c_mto: float = 0.1
    h0: float = 0.0                 # water-filling threshold (wf / mwf)
    hbar: float = 0.0               # best fading state (fading-linear-to)
    p_hbar: float = 0.0
    c_rate: float = 0.0             # constant-rate energy

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind in ("to", "unfaded-to", "mto", "fading-linear-to",
                         "wf", "mwf"):
            if not (0 < self.epsilon < self.mean_harvest):
                raise ValueError(
                    f"need 0 < epsilon < mean harvest, got epsilon="
                    f"{self.epsilon}, mean_harvest={self.mean_harvest}")
        if self.kind in ("mto", "mwf") and self.c_mto <= 0:
            raise ValueError("c_mto must be positive")
        if self.kind in ("wf", "mwf") and self.h0 <= 0:
            raise ValueError("wf/mwf need a positive water-filling threshold")
        if self.kind == "fading-linear-to" and self.p_hbar <= 0:
            raise ValueError("fading-linear-to needs p(h=hbar) > 0")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def default_epsilon(mean_harvest: float) -> float:
        return 0.01 * mean_harvest

    @classmethod
    def unbuffered(cls, rf: RateFunction) -> "PolicySpec":
        return cls(kind="unbuffered", rf=rf)

    @classmethod
    def to(cls, mean_harvest: float, rf: RateFunction,
           epsilon: Optional[float] = None, unfaded: bool = False) -> "PolicySpec":
        eps = cls.default_epsilon(mean_harvest) if epsilon is None else epsilon
        return cls(kind="unfaded-to" if unfaded else "to", rf=rf,
                   mean_harvest=mean_harvest, epsilon=eps)

    @classmethod
    def greedy(cls, rf: RateFunction) -> "PolicySpec":
        return cls(kind="greedy", rf=rf)

    @classmethod
    def mto(cls, mean_harvest: float, rf: RateFunction,
            c: float = 0.1, epsilon: Optional[float] = None) -> "PolicySpec":
        eps = cls.default_epsilon(mean_harvest) if epsilon is None else epsilon
        return cls(kind="mto", rf=rf, mean_harvest=mean_harvest,
                   epsilon=eps, c_mto=c)

    @classmethod
    def wf(cls, mean_harvest: float, rf: RateFunction,
           h_dist: DistributionSpec, epsilon: Optional[float] = None,
           modified: bool = False, c: float = 0.1) -> "PolicySpec":
        """Water-filling with threshold solved for budget E[Y] - epsilon."""
        eps = cls.default_epsilon(mean_harvest) if epsilon is None else epsilon
        h0 = solve_waterfilling_level(h_dist, mean_harvest - eps)
        return cls(kind="mwf" if modified else "wf", rf=rf,
                   mean_harvest=mean_harvest, epsilon=eps, h0=h0, c_mto=c)

    @classmethod
    def fading_linear_to(cls, mean_harvest: float, rf: RateFunction,
                         hbar: float, p_hbar: float,
                         epsilon: Optional[float] = None) -> "PolicySpec":
        eps = cls.default_epsilon(mean_harvest) if epsilon is None else epsilon
        return cls(kind="fading-linear-to", rf=rf, mean_harvest=mean_harvest,
                   epsilon=eps, hbar=hbar, p_hbar=p_hbar)

    @classmethod
    def constant_rate(cls, c_rate: float, rf: RateFunction) -> "PolicySpec":
        return cls(kind="constant-rate", rf=rf, c_rate=c_rate)


@dataclass(frozen=True)
class SensingConfig:
    """Per-slot sensing/processing drain and its stability margin."""

    z_dist: DistributionSpec
    delta: float = 0.05

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def energy_neutral_feasible(self, c_rate: float,
                                mean_harvest: float) -> bool:
        """c + E[Z] < E[Y] - delta: constant-rate operation is sustainable."""
        return c_rate + self.z_dist.exact_mean < mean_harvest - self.delta


# -- decision functions -----------------------------------------------------


def decide_to(s: NodeState, p: PolicySpec) -> float:
    return min(s.E, p.mean_harvest - p.epsilon)


def decide_greedy(s: NodeState, p: PolicySpec) -> float:
    return min(s.E, p.rf.energy(s.q))


def decide_mto(s: NodeState, p: PolicySpec) -> float:
    surplus = max(0.0, s.E - p.c_mto * s.q)
    cap = MTO_CAP_FACTOR * (p.mean_harvest + SURPLUS_GAIN * surplus)
    return min(p.rf.energy(s.q), s.E, cap)


def decide_wf(s: NodeState, h: float, p: PolicySpec) -> float:
    if h <= 0.0:
        return 0.0
    return min(s.E, max(0.0, 1.0 / p.h0 - 1.0 / h))


def decide_mwf(s: NodeState, h: float, p: PolicySpec) -> float:
    if s.q <= 0.0:
        return 0.0
    inv_h = math.inf if h <= 0.0 else 1.0 / h
    surplus = max(0.0, s.E - p.c_mto * s.q)
    level = max(0.0, (1.0 / p.h0 - inv_h) + SURPLUS_GAIN * surplus)
    return min(p.rf.energy(s.q), s.E, level)


def decide_fading_linear_to(s: NodeState, h: float, p: PolicySpec) -> float:
    if h != p.hbar:
        return 0.0
    return min(s.E, (p.mean_harvest - p.epsilon) / p.p_hbar)


def decide_constant_rate(s: NodeState, p: PolicySpec) -> float:
    return min(s.E, p.c_rate)


def decide(p: PolicySpec, s: NodeState, h: float = 1.0,
           harvest: float = 0.0) -> float:
    """Dispatch to the policy's decision rule.

    ``harvest`` is this slot's energy income; only the unbuffered policy
    uses it (it transmits the harvest directly and never banks energy).
    """
    k = p.kind
    if k == "unbuffered":
        return harvest
    if k in ("to", "unfaded-to"):
        return decide_to(s, p)
    if k == "greedy":
        return decide_greedy(s, p)
    if k == "mto":
        return decide_mto(s, p)
    if k == "wf":
        return decide_wf(s, h, p)
    if k == "mwf":
        return decide_mwf(s, h, p)
    if k == "fading-linear-to":
        return decide_fading_linear_to(s, h, p)
    if k == "constant-rate":
        return decide_constant_rate(s, p)
    raise AssertionError(k)


def find_min_rate_constant(ex: float, rf: RateFunction) -> float:
    """Infimum energy c with bits(c) >= mean arrival; caller adds a margin."""
    if ex < 0:
        raise ValueError("mean arrival bits must be >= 0")
    return rf.energy(ex)


# -- stability thresholds ----------------------------------------------------


def stability_bounds(y_dist: DistributionSpec, rf: RateFunction,
                     h_dist: Optional[DistributionSpec] = None,
                     ) -> Tuple[float, float]:
    """(greedy/unbuffered bound, TO bound) on the mean arrival rate.

    Without fading these are E[bits(Y)] and bits(E[Y]); with fading,
    E[bits(hY)] and E[bits(h * E[Y])].  By Jensen the first never exceeds
    the second for concave rate maps.
    """
    if h_dist is None:
        greedy_bound = expected_g(y_dist, rf).value
        to_bound = rf.bits(y_dist.exact_mean)
        return greedy_bound, to_bound

    ey = y_dist.exact_mean
    if h_dist.has_atoms:
        h_vals, h_probs = h_dist.atoms()
        greedy_bound = sum(
            ph * expected_g(y_dist, _scaled_rf(rf, hv)).value
            for hv, ph in zip(h_vals, h_probs) if hv > 0)
        to_bound = sum(ph * rf.bits(hv * ey) for hv, ph in zip(h_vals, h_probs))
        return greedy_bound, to_bound
    greedy_bound = _expect2(h_dist, y_dist, lambda h, y: rf.bits(h * y))
    to_bound = h_dist.expect(lambda h: _bits_arr(rf, h * ey))
    return greedy_bound, to_bound


def _scaled_rf(rf: RateFunction, h: float) -> RateFunction:
    """Rate map seen through a fixed channel gain h: bits(h * t)."""
    if rf.kind == "linear":
        return replace(rf, gamma=rf.gamma * h)
    return replace(rf, beta=rf.beta * h)


def _bits_arr(rf: RateFunction, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if rf.kind == "linear":
        return rf.gamma * x
    return rf.prefactor * np.log1p(rf.beta * x) / math.log(rf.log_base)


def _expect2(d1: DistributionSpec, d2: DistributionSpec, fn) -> float:
    """E[fn(A, B)] for independent A ~ d1, B ~ d2 (nested quadrature)."""
    def inner(a):
        return d2.expect(lambda b: np.vectorize(lambda bb: fn(a, bb))(b))
    return d1.expect(lambda a: np.vectorize(inner)(a))


# -- water filling -----------------------------------------------------------


def mean_excess_power(h_dist: DistributionSpec, mu: float,
                      best_of: int = 1) -> float:
    """E[(mu - 1/h)^+] at water level mu.

    best_of > 1 takes the expectation under the law of the maximum of that
    many independent gains: the relevant law when a scheduler hands the
    slot to the best channel, where the power budget must hold conditional
    on winning.
    """
    if mu <= 0:
        return 0.0
    if h_dist.has_atoms:
        h_vals, h_probs = h_dist.atoms()
        order = np.argsort(h_vals)
        h_vals, h_probs = h_vals[order], h_probs[order]
        if best_of > 1:
            cdf = np.cumsum(h_probs)
            lower = np.concatenate([[0.0], cdf[:-1]])
            h_probs = cdf ** best_of - lower ** best_of
        with np.errstate(divide="ignore"):
            exc = np.maximum(0.0, mu - 1.0 / np.maximum(h_vals, 1e-300))
        return float(np.dot(exc, h_probs))
    if h_dist.kind == "exponential":
        # max of n exponentials: density n f F^(n-1); expanding the power
        # of (1 - e^(-h/m)) gives a finite sum of exp1 terms
        m = h_dist.mean
        a = 1.0 / mu
        total = 0.0
        for k in range(best_of):
            sign = -1.0 if k % 2 else 1.0
            coef = best_of * sign * math.comb(best_of - 1, k)
            r = (k + 1) / m
            total += coef * (mu * math.exp(-a * r) / (k + 1)
                             - special.exp1(a * r) / m)
        return total
    def density(h):
        f = float(h_dist.pdf(h))
        if best_of == 1:
            return f
        cdf = _cdf(h_dist, h)
        return best_of * f * cdf ** (best_of - 1)
    val, _ = integrate.quad(lambda h: (mu - 1.0 / h) * density(h),
                            1.0 / mu, np.inf, limit=200)
    return val


def _cdf(h_dist: DistributionSpec, h: float) -> float:
    if h_dist.kind == "exponential":
        return 1.0 - math.exp(-h / h_dist.mean)
    val, _ = integrate.quad(lambda x: float(h_dist.pdf(x)), 0.0, h, limit=200)
    return val


def solve_waterfilling_level(h_dist: DistributionSpec, budget: float,
                             tol: float = 1e-10, best_of: int = 1) -> float:
    """Threshold h0 with E[(1/h0 - 1/h)^+] = budget, by bisection.

    The map h0 -> average power is strictly decreasing, so the root is
    unique for budget > 0.  best_of conditions the budget on winning a
    best-gain selection among that many nodes.
    """
    if budget <= 0:
        raise ValueError("average power budget must be positive")
    lo = 1e-9
    if h_dist.has_atoms:
        h_vals, _ = h_dist.atoms()
        hi = float(np.max(h_vals))
    else:
        hi = 1.0
    # expand until the bracket straddles the budget
    while mean_excess_power(h_dist, 1.0 / hi, best_of) > budget:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("no finite water level meets the budget")
    while mean_excess_power(h_dist, 1.0 / lo, best_of) < budget:
        lo *= 0.5
        if lo < 1e-300:
            raise ValueError("budget unreachable under this fading law")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mean_excess_power(h_dist, 1.0 / mid, best_of) > budget:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def waterfilling_rate(h_dist: DistributionSpec, rf: RateFunction,
                      h0: float) -> float:
    """E[bits(h * T(h))] for the water-filling allocation at threshold h0."""
    def alloc_bits(h):
        h = np.asarray(h, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.maximum(0.0, 1.0 / h0 - 1.0 / np.maximum(h, 1e-300))
        return _bits_arr(rf, h * t)
    return h_dist.expect(alloc_bits)
