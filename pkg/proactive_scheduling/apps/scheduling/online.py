"""Online schedulers: only the current gain is known, future gains in distribution.

``dp`` runs the discretised Bellman recursion

    Jbar_1(beta, p) = (2^beta - 1) nu_1 p
    Jbar_t(beta, p) = E_h[ min_{0 <= b <= beta} E(b, h) + Jbar_{t-1}(beta - b, p) ]

with p frozen along the recursion. ``ces`` and ``subII`` are the two closed
form approximations.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import ChannelModel
from .channel import InverseMoments
from .channel import geometric_mean
from .channel import inverse_moments
from .core import Allocation
from .core import ContractError
from .core import EpisodeResult
from .core import PacketSpec
from .core import check_gain
from .core import check_probability
from .core import reactive_energy
from .core import realized_episode_energy
from .core import slot_energy
from .core import truncate

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class OnlinePolicy(StrEnum):
    DP = "dp"
    CES = "ces"
    SUBII = "subII"


@dataclass(frozen=True)
class GridSpec:
    """Resolutions of the discretised recursion."""

    n_beta: int = 257
    n_p: int = 65
    n_b: int = 257
    n_h: int = 129
    refine_tol: float = 1e-6

    def __post_init__(self):
        if self.n_beta < 2 or self.n_p < 2:
            raise ContractError(f"beta and p grids need at least 2 nodes, got {self.n_beta}x{self.n_p}")
        if self.n_b < 3:
            raise ContractError(f"bit scan needs at least 3 nodes, got {self.n_b}")
        if self.n_h < 1:
            raise ContractError(f"channel quadrature needs at least 1 node, got {self.n_h}")
        if not self.refine_tol > 0:
            raise ContractError(f"refinement tolerance must be positive, got {self.refine_tol}")

    def to_dict(self) -> dict:
        return asdict(self)


class ValueTables:
    """Jbar_1..Jbar_horizon over a (beta, p) grid for one packet size.

    Stage 1 is analytic and is evaluated exactly, on and off the grid; stages
    t >= 2 are stored on the grid and read by bilinear interpolation.
    """

    def __init__(self, bits: float, nu1: float, grids: GridSpec, surfaces: np.ndarray):
        surfaces = np.asarray(surfaces, dtype=float)
        if surfaces.ndim != 3 or surfaces.shape[1:] != (grids.n_beta, grids.n_p):
            raise ContractError(
                f"surfaces must have shape (stages, {grids.n_beta}, {grids.n_p}), got {surfaces.shape}",
            )
        self.bits = float(bits)
        self.nu1 = float(nu1)
        self.grids = grids
        self.beta_grid = np.linspace(0.0, self.bits, grids.n_beta)
        self.p_grid = np.linspace(0.0, 1.0, grids.n_p)
        surfaces.setflags(write=False)
        self._surfaces = surfaces

    @property
    def horizon(self) -> int:
        return self._surfaces.shape[0] + 1

    def analytic_stage(self, beta, p):
        return np.expm1(np.asarray(beta) * LN2) * self.nu1 * np.asarray(p)

    def stage(self, t: int) -> np.ndarray:
        """Jbar_t on the grid nodes, shape (n_beta, n_p)."""
        self._check_stage(t)
        if t == 1:
            return self.analytic_stage(self.beta_grid[:, None], self.p_grid[None, :])
        return self._surfaces[t - 2]

    def value(self, t: int, beta, p):
        """Jbar_t(beta, p); beta is clamped to [0, bits] and p to [0, 1]."""
        self._check_stage(t)
        beta = np.clip(np.asarray(beta, dtype=float), 0.0, self.bits)
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        if t == 1:
            return self.analytic_stage(beta, p)

        surface = self._surfaces[t - 2]
        i, fi = _cell(beta, self.bits, self.grids.n_beta)
        j, fj = _cell(p, 1.0, self.grids.n_p)
        low = surface[i, j] + fj * (surface[i, j + 1] - surface[i, j])
        high = surface[i + 1, j] + fj * (surface[i + 1, j + 1] - surface[i + 1, j])
        return low + fi * (high - low)

    def _check_stage(self, t: int):
        if not 1 <= t <= self.horizon:
            raise ContractError(f"tables cover stages 1..{self.horizon}, stage {t} requested")

    def save(self, path: Path):
        np.savez_compressed(
            path,
            bits=self.bits,
            nu1=self.nu1,
            grids=np.array([self.grids.n_beta, self.grids.n_p, self.grids.n_b, self.grids.n_h]),
            refine_tol=self.grids.refine_tol,
            surfaces=self._surfaces,
        )

    @classmethod
    def load(cls, path: Path) -> ValueTables:
        with np.load(path) as data:
            n_beta, n_p, n_b, n_h = (int(v) for v in data["grids"])
            grids = GridSpec(n_beta=n_beta, n_p=n_p, n_b=n_b, n_h=n_h, refine_tol=float(data["refine_tol"]))
            return cls(
                bits=float(data["bits"]),
                nu1=float(data["nu1"]),
                grids=grids,
                surfaces=np.array(data["surfaces"]),
            )


def _cell(x, upper: float, n: int):
    """Lower node index and fractional offset on a uniform grid over [0, upper]."""
    if upper == 0:
        return np.zeros_like(x, dtype=int), np.zeros_like(x, dtype=float)
    scaled = x / upper * (n - 1)
    index = np.clip(np.floor(scaled).astype(int), 0, n - 2)
    return index, scaled - index


def golden_section(func, lower, upper, tol: float):
    """Vectorised golden-section search of a unimodal ``func`` on [lower, upper].

    Returns the bracket midpoints and ``func`` evaluated there.
    """
    a = np.array(lower, dtype=float)
    b = np.array(upper, dtype=float)
    width = float(np.max(b - a)) if a.size else 0.0
    iterations = max(int(math.ceil(math.log(tol / width) / math.log(INV_PHI))), 1) if width > tol else 0

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(iterations):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        probe = np.where(left, b - INV_PHI * (b - a), a + INV_PHI * (b - a))
        fprobe = func(probe)
        c, d, fc, fd = (
            np.where(left, probe, d),
            np.where(left, c, probe),
            np.where(left, fprobe, fd),
            np.where(left, fc, fprobe),
        )
    x = 0.5 * (a + b)
    return x, func(x)


def _bellman_stage(
    previous: np.ndarray,
    continuation,
    beta_grid: np.ndarray,
    nodes: np.ndarray,
    weights: np.ndarray,
    tol: float,
) -> np.ndarray:
    """One backward step: Jbar_t on the grid from Jbar_{t-1}.

    The coarse scan restricts b to beta_i - beta_j so the continuation is read
    exactly at grid nodes; the golden-section refinement then searches the two
    neighbouring cells with ``continuation`` evaluated off-grid.
    """
    n_beta, n_p = previous.shape
    spread = beta_grid[:, None] - beta_grid[None, :]
    penalty = np.where(spread >= 0, np.expm1(np.maximum(spread, 0.0) * LN2), np.inf)
    rows = np.arange(n_beta)[:, None]
    cols = np.broadcast_to(np.arange(n_p)[None, :], (n_beta, n_p))
    start = np.broadcast_to(beta_grid[:, None], (n_beta, n_p))

    expected = np.zeros((n_beta, n_p))
    for h, weight in zip(nodes, weights, strict=True):
        cost = penalty[:, :, None] / h + previous[None, :, :]
        best = cost.argmin(axis=1)
        coarse = np.take_along_axis(cost, best[:, None, :], axis=1)[:, 0, :]

        lower = start - beta_grid[np.minimum(best + 1, rows)]
        upper = start - beta_grid[np.maximum(best - 1, 0)]

        def objective(b, h=h):
            return slot_energy(b, h) + continuation(start - b, cols)

        _, refined = golden_section(objective, lower, upper, tol)
        expected += weight * np.minimum(coarse, refined)
    return expected


def build_value_tables(model: ChannelModel, bits: float, window: int, grids: GridSpec | None = None) -> ValueTables:
    """Backward recursion for Jbar_2..Jbar_window (Jbar_1 is analytic)."""
    grids = grids or GridSpec()
    if window < 1:
        raise ContractError(f"value tables need a window of at least 1 slot, got {window}")
    if not bits > 0:
        raise ContractError(f"packet size must be positive, got {bits}")

    nu1 = inverse_moments(model, 1).nu1
    tables = ValueTables(bits, nu1, grids, np.empty((0, grids.n_beta, grids.n_p)))
    nodes, weights = model.quadrature(grids.n_h)
    beta_grid = tables.beta_grid
    delta = bits / (grids.n_beta - 1)
    p_grid = tables.p_grid

    def analytic(beta, cols):
        return tables.analytic_stage(beta, p_grid[cols])

    previous = tables.stage(1)
    continuation = analytic
    surfaces = []
    for t in range(2, window + 1):
        logger.debug("Building value table stage %d for B=%s", t, bits)
        current = _bellman_stage(previous, continuation, beta_grid, nodes, weights, grids.refine_tol)
        surfaces.append(current)

        def interpolated(beta, cols, surface=current):
            scaled = np.clip(beta, 0.0, bits) / delta
            index = np.clip(np.floor(scaled).astype(int), 0, grids.n_beta - 2)
            frac = scaled - index
            return surface[index, cols] + frac * (surface[index + 1, cols] - surface[index, cols])

        previous, continuation = current, interpolated

    surfaces = np.stack(surfaces) if surfaces else np.empty((0, grids.n_beta, grids.n_p))
    logger.info("Built value tables for B=%s, horizon %d (%dx%d grid)", bits, window, grids.n_beta, grids.n_p)
    return ValueTables(bits, nu1, grids, surfaces)


def schedule_tp1_online(bits: float, h2: float, p2: float, nu1: float) -> float:
    """<B/2 + log2(h2 nu_1 p2)/2> in [0, B]."""
    check_gain(h2)
    check_probability(p2)
    if p2 == 0:
        return 0.0
    log_ratio = math.log2(h2) + math.log2(nu1) + math.log2(p2)
    return float(truncate(bits / 2 + 0.5 * log_ratio, bits))


def _dp_decision(tables: ValueTables, t: int, beta: float, h: float, p: float) -> tuple[float, float]:
    if not 2 <= t <= tables.horizon + 1:
        raise ContractError(f"tables with horizon {tables.horizon} cannot schedule slot {t}")
    check_gain(h)
    check_probability(p)
    if beta <= 0 or p == 0:
        return 0.0, float(tables.value(t - 1, beta, p))

    def objective(b):
        return slot_energy(b, h) + tables.value(t - 1, beta - b, p)

    scan = np.linspace(0.0, beta, tables.grids.n_b)
    values = objective(scan)
    k = int(np.argmin(values))
    best_b, best_cost = float(scan[k]), float(values[k])

    lower, upper = scan[max(k - 1, 0)], scan[min(k + 1, scan.size - 1)]
    result = minimize_scalar(
        objective,
        bounds=(lower, upper),
        method="bounded",
        options={"xatol": tables.grids.refine_tol},
    )
    if result.success and float(result.fun) < best_cost:
        best_b, best_cost = float(result.x), float(result.fun)
    return float(truncate(best_b, beta)), best_cost


def dp_step(tables: ValueTables, t: int, beta: float, h: float, p: float) -> float:
    """argmin_b E(b, h) + Jbar_{t-1}(beta - b, p) over [0, beta]."""
    return _dp_decision(tables, t, beta, h, p)[0]


def ces_step(t: int, beta: float, h: float, p: float, nu1: float) -> float:
    """Certainty-equivalent scheduler: future inverse gains replaced by nu_1."""
    if t < 2:
        raise ContractError("ces_step is only defined inside the prediction window (t >= 2)")
    check_gain(h)
    check_probability(p)
    if beta <= 0 or p == 0:
        return 0.0
    # log2(h / eps) with eps = 1 / (nu_1 p^(1/(t-1)))
    log_ratio = math.log2(h * nu1) + math.log2(p) / (t - 1)
    return float(truncate(beta / t + (t - 1) / t * log_ratio, beta))


def _moment_mean(moments: InverseMoments, horizon: int) -> float:
    if horizon > moments.order:
        raise ContractError(f"nu_1..nu_{horizon} required, only {moments.order} available")
    return geometric_mean(moments.nu[:horizon])


def suboptimal_ii_value(beta: float, p: float, horizon: int, moments: InverseMoments) -> float:
    """Closed-form continuation cost from relaxing the box constraint."""
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    check_probability(p)
    g = _moment_mean(moments, horizon)
    return float(horizon * 2.0 ** (beta / horizon) * g * p ** (1.0 / horizon) - (horizon - 1 + p) * moments.nu1)


def suboptimal_ii_step(t: int, beta: float, h: float, p: float, moments: InverseMoments) -> float:
    """Bits to send at slot ``t`` against the closed-form continuation cost.

    Same shape as :func:`ces_step` with nu_1 replaced by the geometric mean
    of nu_1..nu_{t-1}. ``moments`` must reach order ``t - 1``.

    Returns:
        float: bits in [0, beta]; 0 when nothing is left or p is zero.
    """
    if t < 2:
        raise ContractError("suboptimal_ii_step is only defined inside the prediction window (t >= 2)")
    check_gain(h)
    check_probability(p)
    if beta <= 0 or p == 0:
        return 0.0
    g = _moment_mean(moments, t - 1)
    log_ratio = math.log2(h * g) + math.log2(p) / (t - 1)
    return float(truncate(beta / t + (t - 1) / t * log_ratio, beta))


def run_online_episode(
    spec: PacketSpec,
    policy: OnlinePolicy | str,
    channels: Sequence[float],
    p_sequence: Sequence[float],
    indicator: int,
    *,
    moments: InverseMoments | None = None,
    tables: ValueTables | None = None,
) -> EpisodeResult:
    """Schedule a packet causally: slot t only sees h_t, beta_t and p_t."""
    policy = OnlinePolicy(policy)
    if len(channels) != spec.slots:
        raise ContractError(f"window of {spec.window} slots needs {spec.slots} gains, got {len(channels)}")
    if len(p_sequence) != spec.window:
        raise ContractError(f"expected {spec.window} request probabilities, got {len(p_sequence)}")
    if spec.window == 0:
        allocation = Allocation((spec.bits,))
        return EpisodeResult(allocation=allocation, energy=reactive_energy(spec.bits, channels[0], indicator))

    if policy is OnlinePolicy.DP:
        if tables is None:
            raise ContractError("the dp policy needs prebuilt value tables")
        if tables.horizon < spec.window or not math.isclose(tables.bits, spec.bits):
            raise ContractError(
                f"tables built for B={tables.bits}, horizon {tables.horizon} "
                f"cannot serve B={spec.bits}, Tp={spec.window}",
            )
    elif moments is None or moments.order < (spec.window if policy is OnlinePolicy.SUBII else 1):
        raise ContractError(f"the {policy} policy needs inverse moments up to nu_{spec.window}")

    beta = spec.bits
    bits = []
    predicted = None
    for offset, p_t in enumerate(p_sequence):
        t = spec.slots - offset
        h_t = float(channels[offset])
        match policy:
            case OnlinePolicy.DP:
                b_t, cost = _dp_decision(tables, t, beta, h_t, p_t)
                if offset == 0:
                    predicted = cost
            case OnlinePolicy.CES:
                b_t = ces_step(t, beta, h_t, p_t, moments.nu1)
            case OnlinePolicy.SUBII:
                b_t = suboptimal_ii_step(t, beta, h_t, p_t, moments)
        bits.append(b_t)
        beta = max(beta - b_t, 0.0)
    bits.append(beta)

    allocation = Allocation.from_array(bits)
    return EpisodeResult(
        allocation=allocation,
        energy=realized_episode_energy(allocation, channels, indicator),
        predicted=predicted,
    )
