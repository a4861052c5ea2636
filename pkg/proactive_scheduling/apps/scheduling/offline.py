"""Offline schedulers: every channel gain of the window is known in advance.

At slot t the scheduler solves

    min  sum_{i=2..t} (2^b_i - 1)/h_i + p_t (2^b_1 - 1)/h_1
    s.t. sum b_i = beta_t, b_i >= 0

whose solution is water-filling over {h_t, ..., h_2, h_1/p_t}. Only b_t is
used; the next slot re-solves with the updated probability.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import Allocation
from .core import ContractError
from .core import EpisodeResult
from .core import PacketSpec
from .core import SchedulingError
from .core import check_gain
from .core import check_probability
from .core import realized_episode_energy
from .core import slot_energy
from .core import truncate

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_SLOTS = 5
# Grid points evaluated per refinement level of the brute-force search.
BRUTE_FORCE_BUDGET = 200_000
# Half-width, in current steps, of the window kept around the incumbent.
ZOOM_SPAN = 4


class BruteForceRefusedError(SchedulingError):
    """Exhaustive search requested for too many slots"""


@dataclass(frozen=True)
class OfflineInstance:
    """Data of the per-slot problem: gains h_t, ..., h_1 and p_t."""

    t: int
    beta: float
    channels: tuple[float, ...]
    p: float

    def __post_init__(self):
        if self.t < 1:
            raise ContractError(f"slot index must be >= 1, got {self.t}")
        if len(self.channels) != self.t:
            raise ContractError(f"slot {self.t} needs {self.t} channel gains, got {len(self.channels)}")
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ContractError(f"remaining bits must be >= 0, got {self.beta}")
        for h in self.channels:
            check_gain(h)
        check_probability(self.p)

    @classmethod
    def build(cls, t: int, beta: float, channels: Sequence[float], p: float) -> OfflineInstance:
        return cls(t=t, beta=float(beta), channels=tuple(float(h) for h in channels), p=float(p))

    def effective_log_gains(self) -> np.ndarray:
        """log2 of h_t, ..., h_2 followed by the deadline gain inflated to h_1/p_t.

        Kept in the log domain: h_1/p_t overflows for subnormal p_t.
        """
        log_gains = np.log2(np.asarray(self.channels, dtype=float))
        log_gains[-1] = log_gains[-1] - math.log2(self.p) if self.p > 0 else math.inf
        return log_gains


@dataclass(frozen=True)
class WaterfillState:
    """Converged active set and threshold of the water-filling solve."""

    active: tuple[int, ...]
    log_threshold: float

    @property
    def threshold(self) -> float:
        return 2.0**self.log_threshold

    @property
    def size(self) -> int:
        return len(self.active)


@dataclass(frozen=True)
class WaterfillSolution:
    """Full solved vector b_t, ..., b_1 plus the state that produced it."""

    bits: np.ndarray
    state: WaterfillState


def waterfill(gains, beta: float) -> WaterfillSolution:
    """Spread ``beta`` bits over parallel slots with the given positive gains."""
    return waterfill_log2(np.log2(np.asarray(gains, dtype=float)), beta)


def waterfill_log2(log_gains, beta: float) -> WaterfillSolution:
    """Water-filling on log2 gains.

    Active-set iteration: start from every slot, compute the threshold
    ``-beta/N + mean(log2 h)`` over the active set, drop slots at or below
    it, repeat until nothing is dropped. Each pass raises the threshold, so
    at most ``len(log_gains)`` passes are needed.

    Returns:
        WaterfillSolution: bits per slot, zero outside the active set, with
        the converged active set and threshold.
    """
    log_gains = np.asarray(log_gains, dtype=float)
    bits = np.zeros(log_gains.size)
    if beta <= 0:
        return WaterfillSolution(bits=bits, state=WaterfillState(active=(), log_threshold=math.inf))

    active = np.arange(log_gains.size)
    log_threshold = math.inf
    for _ in range(log_gains.size):
        log_threshold = -beta / active.size + float(log_gains[active].mean())
        keep = log_gains[active] > log_threshold
        if keep.all():
            break
        logger.debug("Water-filling drops %d slot(s) below 2^%.6g", int((~keep).sum()), log_threshold)
        active = active[keep]

    bits[active] = log_gains[active] - log_threshold
    state = WaterfillState(active=tuple(int(i) for i in active), log_threshold=log_threshold)
    return WaterfillSolution(bits=bits, state=state)


def solve_window(inst: OfflineInstance) -> WaterfillSolution:
    """Solve the per-slot problem for the whole remaining window."""
    if inst.p == 0:
        # Request probability zero: nothing is sent early, the deadline slot is free.
        bits = np.zeros(inst.t)
        bits[-1] = inst.beta
        return WaterfillSolution(bits=bits, state=WaterfillState(active=(inst.t - 1,), log_threshold=math.inf))
    return waterfill_log2(inst.effective_log_gains(), inst.beta)


def schedule_step(inst: OfflineInstance) -> float:
    """Bits to send at slot ``inst.t`` (t >= 2)."""
    if inst.t < 2:
        raise ContractError("schedule_step is only defined inside the prediction window (t >= 2)")
    if inst.beta == 0 or inst.p == 0:
        return 0.0
    solution = solve_window(inst)
    h_t = inst.channels[0]
    return float(truncate(math.log2(h_t) - solution.state.log_threshold, inst.beta))


def schedule_tp1(bits: float, h2: float, h1: float, p2: float) -> float:
    """Closed form for a one-slot window.

    Returns:
        float: ``B/2 + log2(h2 p2 / h1)/2`` clipped to [0, B], or 0 when the
        request probability is zero.
    """
    check_gain(h2)
    check_gain(h1)
    check_probability(p2)
    if p2 == 0:
        return 0.0
    log_ratio = math.log2(h2) + math.log2(p2) - math.log2(h1)
    return float(truncate(bits / 2 + 0.5 * log_ratio, bits))


def tp1_objective(b, bits: float, h2: float, h1: float, p2: float):
    """Expected energy of sending ``b`` bits early in a one-slot window."""
    return slot_energy(b, h2) + p2 * slot_energy(bits - np.asarray(b), h1)


def tp1_objective_derivatives(b, bits: float, h2: float, h1: float, p2: float):
    """First and second derivatives of :func:`tp1_objective` with respect to b."""
    ln2 = math.log(2.0)
    early = np.exp2(np.asarray(b, dtype=float)) / h2
    late = p2 * np.exp2(bits - np.asarray(b, dtype=float)) / h1
    return ln2 * (early - late), ln2**2 * (early + late)


def window_objective(bits, inst: OfflineInstance) -> float:
    """Expected energy of a full window vector b_t, ..., b_1."""
    bits = np.asarray(bits, dtype=float)
    if bits.size != inst.t:
        raise ContractError(f"expected {inst.t} bit counts, got {bits.size}")
    gains = np.asarray(inst.channels, dtype=float)
    costs = slot_energy(bits, gains)
    return float(costs[:-1].sum() + inst.p * costs[-1])


def run_offline_episode(
    spec: PacketSpec,
    channels: Sequence[float],
    p_sequence: Sequence[float],
    indicator: int,
) -> EpisodeResult:
    """Schedule a packet slot by slot, re-solving with the fresh p_t each slot."""
    if len(channels) != spec.slots:
        raise ContractError(f"window of {spec.window} slots needs {spec.slots} gains, got {len(channels)}")
    if len(p_sequence) != spec.window:
        raise ContractError(f"expected {spec.window} request probabilities, got {len(p_sequence)}")

    beta = spec.bits
    bits = []
    for offset, p_t in enumerate(p_sequence):
        t = spec.slots - offset
        inst = OfflineInstance.build(t, beta, channels[offset:], p_t)
        b_t = schedule_step(inst)
        bits.append(b_t)
        beta = max(beta - b_t, 0.0)
    bits.append(beta)

    allocation = Allocation.from_array(bits)
    return EpisodeResult(allocation=allocation, energy=realized_episode_energy(allocation, channels, indicator))


def _grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    start = math.floor(lo / step + 1e-9)
    stop = math.ceil(hi / step - 1e-9)
    return np.arange(start, stop + 1) * step


def brute_force_allocation(inst: OfflineInstance, grid_step: float = 1e-3) -> Allocation:
    """Grid search over b_t, ..., b_2 (b_1 takes the remainder).

    The search is exhaustive on each level of a coarse-to-fine lattice; each
    level re-centres a window of a few coarse steps around the incumbent, which
    is exact for this separable convex objective. The last level runs on
    multiples of ``grid_step``.
    """
    if inst.t > BRUTE_FORCE_MAX_SLOTS:
        raise BruteForceRefusedError(
            f"brute force limited to {BRUTE_FORCE_MAX_SLOTS} slots, got t={inst.t}",
        )
    if grid_step <= 0:
        raise ContractError(f"grid step must be positive, got {grid_step}")
    if inst.beta == 0:
        return Allocation(tuple(0.0 for _ in range(inst.t)))
    if inst.t == 1:
        return Allocation((inst.beta,))

    free = inst.t - 1
    per_axis = max(int(BRUTE_FORCE_BUDGET ** (1.0 / free)), 3)
    step = max(inst.beta / (per_axis - 1), grid_step)
    lower = np.zeros(free)
    upper = np.full(free, inst.beta)
    gains = np.asarray(inst.channels, dtype=float)
    best = None

    while True:
        axes = [_grid_axis(lo, hi, step) for lo, hi in zip(lower, upper, strict=True)]
        axes = [axis[(axis >= 0) & (axis <= inst.beta + 1e-12)] for axis in axes]
        mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        remainder = inst.beta - mesh.sum(axis=1)
        feasible = remainder >= -1e-12
        mesh, remainder = mesh[feasible], np.maximum(remainder[feasible], 0.0)
        cost = slot_energy(mesh, gains[:-1]).sum(axis=1) + inst.p * slot_energy(remainder, gains[-1])
        best = mesh[int(np.argmin(cost))]
        if step <= grid_step:
            break
        next_step = max(2 * ZOOM_SPAN * step / (per_axis - 1), grid_step)
        lower = np.maximum(best - ZOOM_SPAN * step, 0.0)
        upper = np.minimum(best + ZOOM_SPAN * step, inst.beta)
        step = next_step

    return Allocation.from_array([*best, max(inst.beta - float(best.sum()), 0.0)])
