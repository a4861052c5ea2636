"""Channel-gain distributions and their inverse fractional moments.

Gains are i.i.d. across slots. The online schedulers only ever see the
distribution through nu_i = (E[h^(-1/i)])^i, computed once per model and
cached.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy import special

from .core import ContractError
from .core import SchedulingError

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-8
# Integration runs on [t_o, t_o + TAIL_SPAN/rate]; the rest is bounded analytically.
TAIL_SPAN = 40.0


class DivergenceError(SchedulingError):
    """Inverse moment does not exist for the model"""


class ChannelKind(StrEnum):
    TRUNCATED_EXPONENTIAL = "truncated_exponential"
    DEGENERATE = "degenerate"
    EMPIRICAL = "empirical"


class ChannelModel:
    """Distribution of the slot gain h."""

    kind: ChannelKind

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def inverse_moment(self, order: int) -> float:
        raise NotImplementedError

    def quadrature(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights (summing to one) approximating E_h[f(h)]."""
        raise NotImplementedError

    def scaled(self, factor: float) -> ChannelModel:
        """Model of ``factor * h``."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class TruncatedExponentialChannel(ChannelModel):
    """Exponential gain conditioned on ``h >= threshold``.

    By memorylessness this is ``threshold + Exp(rate)``.
    """

    rate: float = 1.0
    threshold: float = 0.001
    kind = ChannelKind.TRUNCATED_EXPONENTIAL

    def __post_init__(self):
        if not math.isfinite(self.rate) or self.rate <= 0:
            raise ContractError(f"rate must be positive, got {self.rate}")
        if not math.isfinite(self.threshold) or self.threshold < 0:
            raise ContractError(f"threshold must be non-negative, got {self.threshold}")

    def sample(self, n, rng):
        return self.threshold + rng.exponential(1.0 / self.rate, size=n)

    def density(self, h):
        h = np.asarray(h, dtype=float)
        return np.where(h >= self.threshold, self.rate * np.exp(-self.rate * (h - self.threshold)), 0.0)

    def inverse_moment(self, order):
        exponent = 1.0 / order
        if self.threshold == 0:
            if order == 1:
                raise DivergenceError("E[1/h] diverges for an exponential gain without truncation")
            mean = self.rate**exponent * special.gamma(1.0 - exponent)
            return float(mean**order)

        upper = self.threshold + TAIL_SPAN / self.rate
        # Breakpoints on a geometric ladder resolve the steep part near the threshold.
        points = [
            self.threshold * 10.0**k
            for k in range(1, 12)
            if self.threshold * 10.0**k < upper
        ]
        body, _ = integrate.quad(
            lambda h: h**-exponent * self.rate * math.exp(-self.rate * (h - self.threshold)),
            self.threshold,
            upper,
            epsabs=0.0,
            epsrel=QUAD_RTOL * 1e-2,
            limit=500,
            points=points or None,
        )
        tail = upper**-exponent * math.exp(-TAIL_SPAN)
        return float((body + tail) ** order)

    def quadrature(self, n):
        nodes, weights = special.roots_laguerre(n)
        weights = np.asarray(weights, dtype=float)
        return self.threshold + np.asarray(nodes, dtype=float) / self.rate, weights / weights.sum()

    def scaled(self, factor):
        if factor <= 0:
            raise ContractError(f"scale factor must be positive, got {factor}")
        return TruncatedExponentialChannel(rate=self.rate / factor, threshold=self.threshold * factor)

    def describe(self):
        return {"kind": str(self.kind), "rate": self.rate, "threshold": self.threshold}


@dataclass(frozen=True)
class DegenerateChannel(ChannelModel):
    """Constant gain ``gain`` in every slot."""

    gain: float = 1.0
    kind = ChannelKind.DEGENERATE

    def __post_init__(self):
        if not math.isfinite(self.gain) or self.gain <= 0:
            raise ContractError(f"gain must be positive, got {self.gain}")

    def sample(self, n, rng):
        return np.full(n, self.gain, dtype=float)

    def inverse_moment(self, order):
        return 1.0 / self.gain

    def quadrature(self, n):
        return np.array([self.gain]), np.array([1.0])

    def scaled(self, factor):
        if factor <= 0:
            raise ContractError(f"scale factor must be positive, got {factor}")
        return DegenerateChannel(gain=self.gain * factor)

    def describe(self):
        return {"kind": str(self.kind), "gain": self.gain}


@dataclass(frozen=True)
class EmpiricalChannel(ChannelModel):
    """Gain resampled uniformly from a fixed set of observations."""

    samples: tuple[float, ...]
    kind = ChannelKind.EMPIRICAL

    def __post_init__(self):
        if not self.samples:
            raise ContractError("empirical channel needs at least one sample")
        if any(not math.isfinite(s) or s <= 0 for s in self.samples):
            raise ContractError("empirical gains must be finite and positive")

    def sample(self, n, rng):
        return rng.choice(np.asarray(self.samples, dtype=float), size=n, replace=True)

    def inverse_moment(self, order):
        values = np.asarray(self.samples, dtype=float)
        return float(np.mean(values ** (-1.0 / order)) ** order)

    def quadrature(self, n):
        values = np.asarray(self.samples, dtype=float)
        return values, np.full(values.size, 1.0 / values.size)

    def scaled(self, factor):
        if factor <= 0:
            raise ContractError(f"scale factor must be positive, got {factor}")
        return EmpiricalChannel(samples=tuple(s * factor for s in self.samples))

    def describe(self):
        return {"kind": str(self.kind), "samples": list(self.samples)}


@dataclass(frozen=True)
class InverseMoments:
    """nu[i-1] = (E[h^(-1/i)])^i for i = 1..len(nu)."""

    nu: tuple[float, ...]

    def __post_init__(self):
        if not self.nu:
            raise ContractError("at least nu_1 is required")
        if any(not math.isfinite(v) or v <= 0 for v in self.nu):
            raise ContractError(f"inverse moments must be finite and positive: {self.nu}")

    @property
    def nu1(self) -> float:
        return self.nu[0]

    @property
    def order(self) -> int:
        return len(self.nu)

    def __getitem__(self, i: int) -> float:
        """1-based access, ``moments[i] == nu_i``."""
        if not 1 <= i <= len(self.nu):
            raise ContractError(f"nu_{i} not available (computed up to nu_{len(self.nu)})")
        return self.nu[i - 1]

    def scaled(self, factor: float) -> InverseMoments:
        return InverseMoments(tuple(v / factor for v in self.nu))


def build_channel(kind: str, **params) -> ChannelModel:
    """Instantiate a channel model from its config fields."""
    match ChannelKind(kind):
        case ChannelKind.TRUNCATED_EXPONENTIAL:
            return TruncatedExponentialChannel(
                rate=float(params.get("rate", 1.0)),
                threshold=float(params.get("threshold", 0.001)),
            )
        case ChannelKind.DEGENERATE:
            return DegenerateChannel(gain=float(params.get("gain", 1.0)))
        case ChannelKind.EMPIRICAL:
            return EmpiricalChannel(samples=tuple(float(s) for s in params.get("samples", ())))


def sample_gains(model: ChannelModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. slot gains."""
    if n < 1:
        raise ContractError(f"need at least one draw, got n={n}")
    return model.sample(n, rng)


def inverse_moment(model: ChannelModel, order: int) -> float:
    """
    nu_i = (E[h^(-1/i)])^i of the gain distribution.

    Returns:
        float: the moment, finite and positive.

    Raises DivergenceError when the integral does not converge, e.g. nu_1 of
    an exponential gain with no truncation threshold.
    """
    if order < 1:
        raise ContractError(f"moment order must be >= 1, got {order}")
    value = model.inverse_moment(order)
    if not math.isfinite(value) or value <= 0:
        raise DivergenceError(f"nu_{order} is not finite for {model.describe()}")
    return value


@lru_cache(maxsize=64)
def inverse_moments(model: ChannelModel, order: int) -> InverseMoments:
    """nu_1..nu_order for ``model``, cached per (model, order)."""
    moments = InverseMoments(tuple(inverse_moment(model, i) for i in range(1, max(order, 1) + 1)))
    logger.debug("Inverse moments for %s: %s", model.describe(), moments.nu)
    return moments


def geometric_mean(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ContractError("geometric mean of an empty vector")
    if np.any(values <= 0):
        raise ContractError("geometric mean needs positive entries")
    return float(np.exp(np.mean(np.log(values))))
