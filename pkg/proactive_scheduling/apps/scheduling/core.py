"""Energy model and packet bookkeeping shared by every scheduler.

Slots are indexed in descending order: the prediction window (PW) covers
t = Tp+1 ... 2 and t = 1 is the deadline slot where the request may arrive.
Bit counts are continuous reals and energies are expressed in WT = 1 units.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class SchedulingError(Exception):
    """Base error for the scheduling library"""


class DomainError(SchedulingError, ValueError):
    """Argument outside the domain of the energy model"""


class ContractError(SchedulingError, ValueError):
    """Violated precondition (length mismatch, bad index, bad resolution...)"""


@dataclass(frozen=True)
class PacketSpec:
    """Packet of ``bits`` bits with a prediction window of ``window`` slots.

    ``window == 0`` is the reactive network.
    """

    bits: float
    window: int

    def __post_init__(self):
        if not math.isfinite(self.bits) or self.bits <= 0:
            raise ContractError(f"packet size must be positive, got {self.bits}")
        if int(self.window) != self.window or self.window < 0:
            raise ContractError(f"prediction window must be a non-negative integer, got {self.window}")

    @property
    def slots(self) -> int:
        return self.window + 1


@dataclass(frozen=True)
class SlotState:
    """Everything a scheduler sees at slot ``t``."""

    t: int
    beta: float
    h: float
    p: float

    def __post_init__(self):
        if self.t < 1:
            raise ContractError(f"slot index must be >= 1, got {self.t}")
        if self.beta < 0:
            raise ContractError(f"remaining bits must be >= 0, got {self.beta}")
        check_gain(self.h)
        check_probability(self.p)


@dataclass(frozen=True)
class Allocation:
    """Per-slot bit counts ordered b_{Tp+1}, ..., b_1."""

    bits: tuple[float, ...]

    def __post_init__(self):
        if not self.bits:
            raise ContractError("allocation needs at least the deadline slot")
        if any(b < 0 or not math.isfinite(b) for b in self.bits):
            raise ContractError(f"bit counts must be finite and non-negative: {self.bits}")

    @classmethod
    def from_array(cls, values) -> Allocation:
        return cls(tuple(float(v) for v in values))

    @property
    def window(self) -> int:
        return len(self.bits) - 1

    @property
    def total(self) -> float:
        return math.fsum(self.bits)

    @property
    def proactive(self) -> tuple[float, ...]:
        """Bits sent during the prediction window."""
        return self.bits[:-1]

    @property
    def deadline(self) -> float:
        return self.bits[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=float)


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one scheduled episode.

    ``predicted`` is the cost-to-go the scheduler expected at the first slot,
    only filled by schedulers that carry a value function.
    """

    allocation: Allocation
    energy: float
    predicted: float | None = None


def check_gain(h: float) -> float:
    if not math.isfinite(h) or h <= 0:
        raise DomainError(f"channel gain must be finite and positive, got {h}")
    return float(h)


def check_probability(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"probability must lie in [0, 1], got {p}")
    return float(p)


def truncate(value, upper):
    """Clip to ``[0, upper]``: the truncation operator of the closed forms."""
    return np.clip(value, 0.0, upper)


def slot_energy(b, h):
    """Vectorised (2^b - 1)/h without argument checks, for inner loops."""
    return np.expm1(np.asarray(b) * np.log(2.0)) / h


def energy(b: float, h: float) -> float:
    """Energy needed to push ``b`` bits through a slot with gain ``h``."""
    check_gain(h)
    if not math.isfinite(b) or b < 0:
        raise DomainError(f"bit count must be finite and non-negative, got {b}")
    return float(math.expm1(b * math.log(2.0)) / h)


def reactive_energy(bits: float, h1: float, indicator: int) -> float:
    """Energy spent by a reactive network: the whole packet in the deadline slot."""
    if indicator not in (0, 1):
        raise ContractError(f"request indicator must be 0 or 1, got {indicator}")
    cost = energy(bits, h1)
    return cost if indicator else 0.0


def realized_episode_energy(allocation: Allocation, channels: Sequence[float], indicator: int) -> float:
    """Energy actually spent by an allocation once the request outcome is known.

    PW slots always cost energy; the deadline slot only costs when the
    request arrived.
    """
    if len(channels) != len(allocation.bits):
        raise ContractError(
            f"allocation covers {len(allocation.bits)} slots but {len(channels)} channel gains were given",
        )
    if indicator not in (0, 1):
        raise ContractError(f"request indicator must be 0 or 1, got {indicator}")

    proactive = math.fsum(
        energy(b, h) for b, h in zip(allocation.proactive, channels[:-1], strict=True)
    )
    if indicator:
        return proactive + energy(allocation.deadline, channels[-1])
    return proactive
