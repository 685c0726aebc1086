"""Energy-to-bits rate functions and their inverses.

A transmitter that spends energy t in a slot delivers ``bits(t)`` bits.
Two families are supported: a linear map (low-SNR regime) and the
concave log map from the Gaussian-channel capacity formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["RateFunction", "linear_rate", "log_rate"]


@dataclass(frozen=True)
class RateFunction:
    """Nondecreasing map from transmit energy to bits, with bits(0) = 0.

    kind="linear":  bits(t) = gamma * t
    kind="log":     bits(t) = prefactor * log_base(1 + beta * t),
                    prefactor = 1/2 if half_factor else 1
    """

    kind: str = "log"
    gamma: float = 1.0
    beta: float = 1.0
    half_factor: bool = False
    log_base: float = math.e

    def __post_init__(self):
        if self.kind not in ("linear", "log"):
            raise ValueError(f"unknown rate-function kind {self.kind!r}")
        if self.kind == "linear" and self.gamma <= 0:
            raise ValueError("linear rate needs gamma > 0")
        if self.kind == "log":
            if self.beta <= 0:
                raise ValueError("log rate needs beta > 0")
            if self.log_base <= 0 or self.log_base == 1.0:
                raise ValueError("log_base must be positive and != 1")

    @property
    def prefactor(self) -> float:
        return 0.5 if self.half_factor else 1.0

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    def bits(self, t: float) -> float:
        """Bits delivered by transmit energy t >= 0."""
        if t < 0:
            raise ValueError(f"transmit energy must be >= 0, got {t}")
        if self.kind == "linear":
            return self.gamma * t
        return self.prefactor * math.log1p(self.beta * t) / math.log(self.log_base)

    def energy(self, b: float) -> float:
        """Inverse of bits(): minimum energy needed to deliver b bits."""
        if b < 0:
            raise ValueError(f"bit count must be >= 0, got {b}")
        if self.kind == "linear":
            return b / self.gamma
        try:
            return math.expm1(b / self.prefactor * math.log(self.log_base)) / self.beta
        except OverflowError:
            return math.inf


def linear_rate(gamma: float) -> RateFunction:
    return RateFunction(kind="linear", gamma=gamma)


def log_rate(beta: float = 1.0, half_factor: bool = False,
             log_base: float = math.e) -> RateFunction:
    return RateFunction(kind="log", beta=beta, half_factor=half_factor,
                        log_base=log_base)
