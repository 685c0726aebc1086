"""Random-variate generation for arrivals, harvest, sensing drain and fading.

All sampling is inverse-transform based on a seeded uniform stream, so that
runs with the same (seed, stream_id) are bit-identical and sweeps over the
mean re-use the same underlying uniforms (common random numbers: a larger
configured mean never produces smaller variates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .rates import RateFunction

__all__ = [
    "RandomStream",
    "DistributionSpec",
    "Estimate",
    "expected_g",
]

_PROB_TOL = 1e-12
_U_FLOOR = 1e-300  # keeps log(u) finite; Generator.random() can return 0.0

# Mixture used throughout for "Hyperexponential(5)": component means are
# mean * k / 4.9 for k in the multiplier list below; the weighted mean is
# then exactly the configured mean.
HYPEREXP5_MULTIPLIERS = (1.0, 2.0, 3.0, 6.0, 10.0)
HYPEREXP5_WEIGHTS = (0.1, 0.2, 0.2, 0.3, 0.2)


def _mix64(a: int, b: int) -> int:
    return (a * 0x9E3779B97F4A7C15 + b + 1) % (1 << 64)


@dataclass
class RandomStream:
    """Deterministic uniform stream identified by (seed, stream_id).

    Single-owner mutable: parallel replications must use distinct
    stream_ids rather than sharing one instance.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(n)

    def uniform(self) -> float:
        return float(self._gen.random())

    def child(self, tag: int) -> "RandomStream":
        """Derived independent stream; deterministic in (seed, stream_id, tag)."""
        return RandomStream(self.seed, _mix64(self.stream_id, tag))


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass(frozen=True)
class DistributionSpec:
    """Nonnegative-variate generator specification.

    kinds: deterministic, exponential, truncated-poisson, erlang,
    hyperexponential, discrete.  ``mean`` is the configured mean; for
    truncated-poisson it is the untruncated rate and ``exact_mean``
    reports the mean actually sampled.
    """

    kind: str
    mean: float = 0.0
    cap: int = 0                    # truncated-poisson only
    renormalize: bool = False       # truncated-poisson: condition on <= cap
    shape: int = 1                  # erlang stage count
    mixture_weights: Tuple[float, ...] = ()
    mean_multipliers: Tuple[float, ...] = ()
    atom_values: Tuple[float, ...] = ()
    atom_probs: Tuple[float, ...] = ()

    # -- constructors -----------------------------------------------------

    @classmethod
    def deterministic(cls, mean: float) -> "DistributionSpec":
        return cls(kind="deterministic", mean=mean)

    @classmethod
    def exponential(cls, mean: float) -> "DistributionSpec":
        return cls(kind="exponential", mean=mean)

    @classmethod
    def truncated_poisson(cls, rate: float, cap: int,
                          renormalize: bool = False) -> "DistributionSpec":
        return cls(kind="truncated-poisson", mean=rate, cap=cap,
                   renormalize=renormalize)

    @classmethod
    def erlang(cls, mean: float, shape: int = 5) -> "DistributionSpec":
        return cls(kind="erlang", mean=mean, shape=shape)

    @classmethod
    def hyperexponential(cls, mean: float,
                         weights: Sequence[float] = HYPEREXP5_WEIGHTS,
                         multipliers: Sequence[float] = HYPEREXP5_MULTIPLIERS,
                         ) -> "DistributionSpec":
        return cls(kind="hyperexponential", mean=mean,
                   mixture_weights=tuple(weights),
                   mean_multipliers=tuple(multipliers))

    @classmethod
    def discrete(cls, atoms: Sequence[Tuple[float, float]]) -> "DistributionSpec":
        values = tuple(float(v) for v, _ in atoms)
        probs = tuple(float(p) for _, p in atoms)
        mean = sum(v * p for v, p in zip(values, probs))
        return cls(kind="discrete", mean=mean, atom_values=values,
                   atom_probs=probs)

    def __post_init__(self):
        k = self.kind
        if k not in ("deterministic", "exponential", "truncated-poisson",
                     "erlang", "hyperexponential", "discrete"):
            raise ValueError(f"unknown distribution kind {k!r}")
        if self.mean < 0:
            raise ValueError("mean must be nonnegative")
        if k == "truncated-poisson":
            if self.cap < 0 or self.cap != int(self.cap):
                raise ValueError("truncated-poisson needs integer cap >= 0")
        if k == "erlang" and (self.shape < 1 or self.shape != int(self.shape)):
            raise ValueError("erlang needs integer shape >= 1")
        if k == "hyperexponential":
            w, m = self.mixture_weights, self.mean_multipliers
            if len(w) != len(m) or not w:
                raise ValueError("hyperexponential needs matching weights and "
                                 "multipliers")
            if any(x <= 0 for x in m) or any(x < 0 for x in w):
                raise ValueError("multipliers must be positive, weights >= 0")
            if abs(sum(w) - 1.0) > _PROB_TOL:
                raise ValueError(f"mixture weights sum to {sum(w)}, not 1")
        if k == "discrete":
            if not self.atom_values:
                raise ValueError("discrete needs at least one atom")
            if any(v < 0 for v in self.atom_values):
                raise ValueError("atom values must be nonnegative")
            if any(p < 0 for p in self.atom_probs):
                raise ValueError("atom probabilities must be nonnegative")
            if abs(sum(self.atom_probs) - 1.0) > _PROB_TOL:
                raise ValueError(
                    f"atom probabilities sum to {sum(self.atom_probs)}, not 1")

    # -- derived quantities ------------------------------------------------

    @property
    def component_means(self) -> Tuple[float, ...]:
        """Hyperexponential component means (mean * k / sum(w*k))."""
        w, m = self.mixture_weights, self.mean_multipliers
        norm = sum(wi * mi for wi, mi in zip(w, m))
        return tuple(self.mean * mi / norm for mi in m)

    @property
    def exact_mean(self) -> float:
        """Mean of the variates actually produced (exact, not configured)."""
        if self.kind == "truncated-poisson":
            values, probs = self.atoms()
            return float(np.dot(values, probs))
        return self.mean

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        """(values, probabilities) for kinds with finite support."""
        if self.kind == "deterministic":
            return np.array([self.mean]), np.array([1.0])
        if self.kind == "discrete":
            return np.array(self.atom_values), np.array(self.atom_probs)
        if self.kind == "truncated-poisson":
            lam, cap = self.mean, self.cap
            pmf = np.array([math.exp(-lam) * lam ** k / math.factorial(k)
                            for k in range(cap + 1)])
            if self.renormalize:
                pmf = pmf / pmf.sum()
            else:
                pmf[cap] = 1.0 - pmf[:cap].sum()  # excess mass clipped to cap
            return np.arange(cap + 1, dtype=float), pmf
        raise ValueError(f"{self.kind} has no finite atom representation")

    @property
    def has_atoms(self) -> bool:
        return self.kind in ("deterministic", "discrete", "truncated-poisson")

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Density for the continuous kinds."""
        x = np.asarray(x, dtype=float)
        m = self.mean
        if self.kind == "exponential":
            return np.where(x >= 0, np.exp(-x / m) / m, 0.0)
        if self.kind == "erlang":
            rate = self.shape / m
            logpdf = (self.shape * math.log(rate)
                      + (self.shape - 1) * np.log(np.maximum(x, 1e-300))
                      - rate * x - math.lgamma(self.shape))
            return np.where(x > 0, np.exp(logpdf), 0.0)
        if self.kind == "hyperexponential":
            out = np.zeros_like(x)
            for w, cm in zip(self.mixture_weights, self.component_means):
                out = out + w * np.exp(-x / cm) / cm
            return np.where(x >= 0, out, 0.0)
        raise ValueError(f"{self.kind} has no density")

    def scaled_to(self, new_mean: float) -> "DistributionSpec":
        """Same shape, new configured mean (atom values rescale for discrete)."""
        if self.kind == "discrete":
            if self.mean <= 0:
                raise ValueError("cannot rescale a zero-mean discrete spec")
            ratio = new_mean / self.mean
            return DistributionSpec.discrete(
                [(v * ratio, p) for v, p in
                 zip(self.atom_values, self.atom_probs)])
        return DistributionSpec(
            kind=self.kind, mean=new_mean, cap=self.cap,
            renormalize=self.renormalize, shape=self.shape,
            mixture_weights=self.mixture_weights,
            mean_multipliers=self.mean_multipliers)

    # -- sampling ----------------------------------------------------------

    def sample_array(self, rs: RandomStream, n: int) -> np.ndarray:
        """n variates by inverse transform from rs's uniform stream."""
        k = self.kind
        if k == "deterministic":
            return np.full(n, self.mean)
        if k == "exponential":
            u = np.maximum(rs.uniforms(n), _U_FLOOR)
            return -self.mean * np.log(u)
        if k == "erlang":
            u = np.maximum(rs.uniforms(n * self.shape), _U_FLOOR)
            logs = np.log(u).reshape(n, self.shape)
            return -(self.mean / self.shape) * logs.sum(axis=1)
        if k == "hyperexponential":
            sel = rs.uniforms(n)
            u = np.maximum(rs.uniforms(n), _U_FLOOR)
            cum = np.cumsum(self.mixture_weights)
            idx = np.searchsorted(cum, sel, side="right").clip(0, len(cum) - 1)
            means = np.asarray(self.component_means)[idx]
            return -means * np.log(u)
        if k == "truncated-poisson":
            u = rs.uniforms(n)
            lam, cap = self.mean, self.cap
            pmf = np.array([math.exp(-lam) * lam ** kk / math.factorial(kk)
                            for kk in range(cap + 1)])
            cdf = np.cumsum(pmf)
            if self.renormalize:
                return np.searchsorted(cdf, u * cdf[cap],
                                       side="left").astype(float)
            # min(Poisson, cap): invert the untruncated CDF up to cap-1,
            # everything beyond clips to cap
            return np.searchsorted(cdf[:cap], u, side="left").astype(float)
        if k == "discrete":
            u = rs.uniforms(n)
            cum = np.cumsum(self.atom_probs)
            idx = np.searchsorted(cum, u, side="right").clip(
                0, len(self.atom_values) - 1)
            return np.asarray(self.atom_values)[idx]
        raise AssertionError(k)

    def sample(self, rs: RandomStream) -> float:
        return float(self.sample_array(rs, 1)[0])

    def expect(self, fn: Callable[[np.ndarray], np.ndarray],
               quad_limit: int = 200) -> float:
        """E[fn(X)]: exact sum over atoms, adaptive quadrature otherwise."""
        if self.has_atoms:
            values, probs = self.atoms()
            return float(np.dot(fn(values), probs))
        val, _ = integrate.quad(lambda x: float(fn(np.array(x)) * self.pdf(x)),
                                0, np.inf, limit=quad_limit)
        return val


def expected_g(d: DistributionSpec, rf: RateFunction,
               n_mc: int = 0, rs: Optional[RandomStream] = None) -> Estimate:
    """E[bits(X)] for X ~ d.

    Finite-support kinds are summed exactly (stderr 0).  Continuous kinds
    use quadrature by default, or Monte Carlo with a standard-error report
    when n_mc >= 10_000 and a stream is supplied.
    """
    if d.has_atoms:
        values, probs = d.atoms()
        vals = np.array([rf.bits(v) for v in values])
        return Estimate(float(np.dot(vals, probs)), 0.0)
    if n_mc:
        if n_mc < 10_000:
            raise ValueError("Monte Carlo path needs n_mc >= 10_000")
        if rs is None:
            raise ValueError("Monte Carlo path needs a RandomStream")
        xs = d.sample_array(rs, n_mc)
        g = _bits_vec(rf, xs)
        return Estimate(float(g.mean()), float(g.std(ddof=1) / math.sqrt(n_mc)))
    value = d.expect(lambda x: _bits_vec(rf, x))
    return Estimate(value, 0.0)


def _bits_vec(rf: RateFunction, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if rf.kind == "linear":
        return rf.gamma * x
    return rf.prefactor * np.log1p(rf.beta * x) / math.log(rf.log_base)
