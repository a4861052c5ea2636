"""Monte Carlo engine comparing proactive schedulers against the reactive baseline.

One trial draws a location model (or reuses the fixed one), the channel gains
of the longest window, a location path started from the stationary law and
the request indicator. Every (B, Tp, scheduler) sweep point of that trial is
evaluated on those same draws; a window of Tp slots reads the last Tp + 1 of
them so it always ends at the deadline slot.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from enum import StrEnum
from pathlib import Path

import numpy as np
from joblib import Parallel
from joblib import delayed

from proactive_scheduling.apps.scheduling.channel import ChannelModel
from proactive_scheduling.apps.scheduling.channel import InverseMoments
from proactive_scheduling.apps.scheduling.channel import TruncatedExponentialChannel
from proactive_scheduling.apps.scheduling.channel import build_channel
from proactive_scheduling.apps.scheduling.channel import inverse_moments
from proactive_scheduling.apps.scheduling.channel import sample_gains
from proactive_scheduling.apps.scheduling.core import ContractError
from proactive_scheduling.apps.scheduling.core import PacketSpec
from proactive_scheduling.apps.scheduling.core import SchedulingError
from proactive_scheduling.apps.scheduling.core import reactive_energy
from proactive_scheduling.apps.scheduling.mobility import LocationModel
from proactive_scheduling.apps.scheduling.mobility import random_model
from proactive_scheduling.apps.scheduling.mobility import request_probabilities
from proactive_scheduling.apps.scheduling.mobility import sample_initial_location
from proactive_scheduling.apps.scheduling.mobility import sample_location_path
from proactive_scheduling.apps.scheduling.mobility import sample_request
from proactive_scheduling.apps.scheduling.offline import run_offline_episode
from proactive_scheduling.apps.scheduling.online import GridSpec
from proactive_scheduling.apps.scheduling.online import OnlinePolicy
from proactive_scheduling.apps.scheduling.online import ValueTables
from proactive_scheduling.apps.scheduling.online import run_online_episode

from .tables import load_or_build_tables

logger = logging.getLogger(__name__)

# Trials per joblib/Celery work unit.
CHUNK_SIZE = 50
DELIVERY_TOL = 1e-9


class ExperimentError(Exception):
    """Failure while running an experiment"""


class Scheduler(StrEnum):
    REACTIVE = "reactive"
    OFFLINE = "offline"
    DP = "dp"
    CES = "ces"
    SUBII = "subII"

    @property
    def is_online(self) -> bool:
        return self in (Scheduler.DP, Scheduler.CES, Scheduler.SUBII)


class MobilityMode(StrEnum):
    MARKOV = "markov"
    FIXED_P = "fixed_p"


class Backend(StrEnum):
    LOCAL = "local"
    CELERY = "celery"


@dataclass(frozen=True)
class MobilityConfig:
    mode: MobilityMode = MobilityMode.MARKOV
    k: int = 3
    transition: tuple[tuple[float, ...], ...] | None = None
    request_stats: tuple[float, ...] | None = None
    fixed_model: bool = False
    p2: tuple[float, ...] = (0.1, 0.5, 1.0)

    def __post_init__(self):
        if self.mode is MobilityMode.FIXED_P:
            if not self.p2:
                raise ContractError("fixed_p mode needs at least one p2 value")
            if any(not 0.0 <= p <= 1.0 for p in self.p2):
                raise ContractError(f"p2 values must lie in [0, 1], got {self.p2}")
        elif (self.transition is None) != (self.request_stats is None):
            raise ContractError("an explicit location model needs both transition and request_stats")
        if self.k < 1:
            raise ContractError(f"need at least one location, got k={self.k}")

    @property
    def explicit(self) -> bool:
        return self.transition is not None

    def explicit_model(self) -> LocationModel | None:
        if not self.explicit:
            return None
        return LocationModel(transition=np.array(self.transition), request_stats=np.array(self.request_stats))

    def to_dict(self) -> dict:
        data = {"mode": str(self.mode), "k": self.k, "fixed_model": self.fixed_model}
        if self.mode is MobilityMode.FIXED_P:
            data["p2"] = list(self.p2)
        if self.explicit:
            data["transition"] = [list(row) for row in self.transition]
            data["request_stats"] = list(self.request_stats)
        return data


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved sweep: every default has been applied."""

    bits: tuple[float, ...]
    windows: tuple[int, ...]
    schedulers: tuple[Scheduler, ...]
    n_trials: int = 1000
    seed: int = 0
    channel: ChannelModel = field(default_factory=TruncatedExponentialChannel)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    grids: GridSpec = field(default_factory=GridSpec)
    dump_trials: bool = False

    def __post_init__(self):
        if self.n_trials < 1:
            raise ContractError(f"n_trials must be >= 1, got {self.n_trials}")
        if not self.bits or not self.windows or not self.schedulers:
            raise ContractError("bits, windows and schedulers must be non-empty")
        if any(not b > 0 for b in self.bits):
            raise ContractError(f"packet sizes must be positive, got {self.bits}")
        if any(w < 0 for w in self.windows):
            raise ContractError(f"windows must be non-negative, got {self.windows}")
        if self.seed < 0:
            raise ContractError(f"seed must be non-negative, got {self.seed}")

    @property
    def max_window(self) -> int:
        return max(self.windows)

    @property
    def p2_values(self) -> tuple[float | None, ...]:
        if self.mobility.mode is MobilityMode.FIXED_P:
            return self.mobility.p2
        return (None,)

    def points(self, *, with_baseline: bool = False) -> list[SweepPoint]:
        """Sweep points; reactive appears once per (B, p2).

        ``with_baseline`` adds the reactive point even when it is not
        reported, since every saved-energy column is relative to it.
        """
        reactive = with_baseline or Scheduler.REACTIVE in self.schedulers
        points = []
        for b in self.bits:
            for p2 in self.p2_values:
                if reactive:
                    points.append(SweepPoint(b, 0, p2, Scheduler.REACTIVE))
                points.extend(
                    SweepPoint(b, w, p2, s)
                    for w in self.windows
                    for s in self.schedulers
                    if s is not Scheduler.REACTIVE
                )
        return points

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_trials": self.n_trials,
            "bits": list(self.bits),
            "windows": list(self.windows),
            "schedulers": [str(s) for s in self.schedulers],
            "dump_trials": self.dump_trials,
            "channel": self.channel.describe(),
            "mobility": self.mobility.to_dict(),
            "grids": self.grids.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        """Inverse of :meth:`to_dict`; used to ship configs to workers."""
        mobility = dict(data.get("mobility", {}))
        if mobility.get("transition") is not None:
            mobility["transition"] = tuple(tuple(float(v) for v in row) for row in mobility["transition"])
            mobility["request_stats"] = tuple(float(v) for v in mobility["request_stats"])
        if "p2" in mobility:
            mobility["p2"] = tuple(float(p) for p in mobility["p2"])
        if "mode" in mobility:
            mobility["mode"] = MobilityMode(mobility["mode"])
        channel = dict(data.get("channel", {}))
        return cls(
            bits=tuple(float(b) for b in data["bits"]),
            windows=tuple(int(w) for w in data["windows"]),
            schedulers=tuple(Scheduler(s) for s in data["schedulers"]),
            n_trials=int(data.get("n_trials", 1000)),
            seed=int(data.get("seed", 0)),
            channel=build_channel(channel.pop("kind", "truncated_exponential"), **channel),
            mobility=MobilityConfig(**mobility),
            grids=GridSpec(**data.get("grids", {})),
            dump_trials=bool(data.get("dump_trials", False)),
        )


@dataclass(frozen=True)
class SweepPoint:
    bits: float
    window: int
    p2: float | None
    scheduler: Scheduler

    def key(self) -> tuple:
        return (self.bits, self.window, self.p2, str(self.scheduler))


@dataclass(frozen=True)
class Outcome:
    point: SweepPoint
    energy: float
    indicator: int
    delivered: float
    predicted: float | None = None


@dataclass(frozen=True)
class TrialRecord:
    """Realised energies of every sweep point on one set of draws."""

    trial: int
    digest: str
    final_location: int | None
    indicator: int | None
    outcomes: tuple[Outcome, ...]

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "digest": self.digest,
            "final_location": self.final_location,
            "indicator": self.indicator,
            "outcomes": [
                [
                    o.point.bits,
                    o.point.window,
                    o.point.p2,
                    str(o.point.scheduler),
                    o.energy,
                    o.indicator,
                    o.delivered,
                    o.predicted,
                ]
                for o in self.outcomes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> TrialRecord:
        outcomes = tuple(
            Outcome(
                point=SweepPoint(float(b), int(w), None if p2 is None else float(p2), Scheduler(s)),
                energy=float(energy),
                indicator=int(indicator),
                delivered=float(delivered),
                predicted=None if predicted is None else float(predicted),
            )
            for b, w, p2, s, energy, indicator, delivered, predicted in data["outcomes"]
        )
        return cls(
            trial=int(data["trial"]),
            digest=data["digest"],
            final_location=data["final_location"],
            indicator=data["indicator"],
            outcomes=outcomes,
        )


@dataclass(frozen=True)
class SavedEnergy:
    """Both dB readings of reactive-minus-proactive savings; None marks no gain."""

    difference_db: float | None
    ratio_db: float | None

    @property
    def no_gain(self) -> bool:
        return self.difference_db is None


@dataclass(frozen=True)
class SummaryRow:
    bits: float
    window: int
    p2: float | None
    scheduler: Scheduler
    mean_energy: float
    stderr: float
    n_trials: int
    saved: SavedEnergy
    predicted_mean: float | None = None

    def to_dict(self) -> dict:
        """JSON-safe form; infinite savings (zero proactive energy) become "inf"."""
        data = asdict(self)
        data["scheduler"] = str(self.scheduler)
        data["saved"] = {
            key: str(value) if value is not None and not math.isfinite(value) else value
            for key, value in data["saved"].items()
        }
        return data


@dataclass
class TrialContext:
    """Read-only state shared by every trial of a run."""

    moments: InverseMoments | None = None
    tables: dict[float, ValueTables] = field(default_factory=dict)
    model: LocationModel | None = None
    table_paths: dict[float, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentResult:
    rows: list[SummaryRow]
    records: list[TrialRecord]


def saved_energy_db(reactive_mean: float, proactive_mean: float) -> SavedEnergy:
    """
    Energy saved by a proactive scheduler over the reactive baseline.

    Returns:
        SavedEnergy: ``10 log10(reactive - proactive)`` and the ratio reading
        ``10 log10(reactive / proactive)``, both None when nothing is saved.
    """
    if reactive_mean < 0 or proactive_mean < 0:
        raise ContractError("mean energies must be non-negative")
    difference = reactive_mean - proactive_mean
    if difference <= 0:
        return SavedEnergy(difference_db=None, ratio_db=None)
    ratio = math.inf if proactive_mean == 0 else 10.0 * math.log10(reactive_mean / proactive_mean)
    return SavedEnergy(difference_db=10.0 * math.log10(difference), ratio_db=ratio)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def prepare_context(
    config: ExperimentConfig,
    table_cache: Path | None = None,
    *,
    build_tables: bool = True,
) -> TrialContext:
    """Moments, value tables and the fixed location model, computed once per run."""
    context = TrialContext()
    if any(s.is_online for s in config.schedulers):
        context.moments = inverse_moments(config.channel, max(config.max_window, 1))

    if build_tables and Scheduler.DP in config.schedulers and config.max_window >= 1:
        for bits in config.bits:
            tables, path = load_or_build_tables(config.channel, bits, config.max_window, config.grids, table_cache)
            context.tables[bits] = tables
            if path is not None:
                context.table_paths[bits] = str(path)

    if config.mobility.mode is MobilityMode.MARKOV:
        if config.mobility.explicit:
            context.model = config.mobility.explicit_model()
        elif config.mobility.fixed_model:
            context.model = random_model(config.mobility.k, np.random.default_rng(np.random.SeedSequence(config.seed)))
    return context


def _digest(*arrays) -> str:
    sha = hashlib.sha256()
    for array in arrays:
        sha.update(np.ascontiguousarray(array).tobytes())
    return sha.hexdigest()[:16]


def _evaluate(
    point: SweepPoint,
    channels: np.ndarray,
    p_sequence: np.ndarray,
    indicator: int,
    context: TrialContext,
) -> Outcome:
    spec = PacketSpec(bits=point.bits, window=point.window)
    window_channels = channels[channels.size - spec.slots:]
    window_p = p_sequence[p_sequence.size - spec.window:] if spec.window else p_sequence[:0]

    predicted = None
    match point.scheduler:
        case Scheduler.REACTIVE:
            energy = reactive_energy(point.bits, float(channels[-1]), indicator)
            delivered = point.bits
        case Scheduler.OFFLINE:
            result = run_offline_episode(spec, window_channels, window_p, indicator)
            energy, delivered = result.energy, result.allocation.total
        case _:
            result = run_online_episode(
                spec,
                OnlinePolicy(str(point.scheduler)),
                window_channels,
                window_p,
                indicator,
                moments=context.moments,
                tables=context.tables.get(point.bits),
            )
            energy, delivered, predicted = result.energy, result.allocation.total, result.predicted
    return Outcome(point=point, energy=energy, indicator=indicator, delivered=delivered, predicted=predicted)


def run_trial(config: ExperimentConfig, trial: int, context: TrialContext | None = None) -> TrialRecord:
    """Evaluate every sweep point on one set of common random draws."""
    context = context or prepare_context(config)
    rng = trial_rng(config.seed, trial)
    slots = config.max_window + 1
    points = config.points(with_baseline=True)

    if config.mobility.mode is MobilityMode.FIXED_P:
        channels = sample_gains(config.channel, slots, rng)
        u = rng.random()
        outcomes = []
        for point in points:
            p2 = point.p2
            indicator = int(u < p2)
            p_sequence = np.full(config.max_window, p2)
            outcomes.append(_evaluate(point, channels, p_sequence, indicator, context))
        return TrialRecord(
            trial=trial,
            digest=_digest(channels, np.array([u])),
            final_location=None,
            indicator=None,
            outcomes=tuple(outcomes),
        )

    model = context.model or random_model(config.mobility.k, rng)
    channels = sample_gains(config.channel, slots, rng)
    start = sample_initial_location(model, rng)
    path = sample_location_path(model, start, slots, rng)
    indicator = sample_request(model, int(path[-1]), rng)
    p_sequence = request_probabilities(model, path)
    outcomes = tuple(_evaluate(point, channels, p_sequence, indicator, context) for point in points)
    return TrialRecord(
        trial=trial,
        digest=_digest(channels, path, np.array([indicator])),
        final_location=int(path[-1]),
        indicator=indicator,
        outcomes=outcomes,
    )


def simulate_chunk(config: ExperimentConfig, context: TrialContext, start: int, stop: int) -> list[TrialRecord]:
    return [run_trial(config, trial, context) for trial in range(start, stop)]


def chunk_bounds(n_trials: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    return [(start, min(start + chunk_size, n_trials)) for start in range(0, n_trials, chunk_size)]


def _run_local(config: ExperimentConfig, context: TrialContext, jobs: int) -> list[TrialRecord]:
    bounds = chunk_bounds(config.n_trials)
    if jobs == 1 or len(bounds) == 1:
        return [record for start, stop in bounds for record in simulate_chunk(config, context, start, stop)]
    chunks = Parallel(n_jobs=jobs)(delayed(simulate_chunk)(config, context, start, stop) for start, stop in bounds)
    return [record for chunk in chunks for record in chunk]


def _run_celery(config: ExperimentConfig, context: TrialContext) -> list[TrialRecord]:
    from celery import group

    from .tasks import simulate_trials

    if Scheduler.DP in config.schedulers and config.max_window >= 1 and not context.table_paths:
        raise ExperimentError("the celery backend needs a value-table cache directory for dp")
    payload = config.to_dict()
    table_paths = {str(bits): path for bits, path in context.table_paths.items()}
    job = group(simulate_trials.s(payload, start, stop, table_paths) for start, stop in chunk_bounds(config.n_trials))
    chunks = job.apply_async().get()
    return [TrialRecord.from_dict(record) for chunk in chunks for record in chunk]


def simulate(
    config: ExperimentConfig,
    *,
    jobs: int = 1,
    backend: Backend | str = Backend.LOCAL,
    table_cache: Path | None = None,
    context: TrialContext | None = None,
) -> list[TrialRecord]:
    """All trial records, sorted by trial index."""
    backend = Backend(backend)
    context = context or prepare_context(config, table_cache)
    logger.info(
        "Simulating %d trials (%d sweep points) with the %s backend, jobs=%d",
        config.n_trials,
        len(config.points()),
        backend,
        jobs,
    )
    try:
        records = _run_celery(config, context) if backend is Backend.CELERY else _run_local(config, context, jobs)
    except SchedulingError:
        raise
    except Exception as exc:
        raise ExperimentError(f"simulation failed: {exc}") from exc
    return sorted(records, key=lambda record: record.trial)


def summarize(config: ExperimentConfig, records: Iterable[TrialRecord]) -> list[SummaryRow]:
    """Mean, standard error and savings per sweep point, independent of record order."""
    records = sorted(records, key=lambda record: record.trial)
    energies: dict[tuple, list[float]] = defaultdict(list)
    predictions: dict[tuple, list[float]] = defaultdict(list)
    for record in records:
        for outcome in record.outcomes:
            energies[outcome.point.key()].append(outcome.energy)
            if outcome.predicted is not None:
                predictions[outcome.point.key()].append(outcome.predicted)

    def stats(values: list[float]) -> tuple[float, float]:
        data = np.asarray(values, dtype=float)
        mean = math.fsum(values) / data.size
        stderr = float(np.std(data, ddof=1) / math.sqrt(data.size)) if data.size > 1 else 0.0
        return mean, stderr

    reactive = {}
    for bits in config.bits:
        for p2 in config.p2_values:
            baseline = energies.get(SweepPoint(bits, 0, p2, Scheduler.REACTIVE).key())
            if not baseline:
                raise ExperimentError(f"no reactive baseline recorded for B={bits}, p2={p2}")
            reactive[bits, p2] = stats(baseline)[0]

    rows = []
    for point in config.points():
        values = energies[point.key()]
        if not values:
            continue
        mean, stderr = stats(values)
        saved = saved_energy_db(reactive[point.bits, point.p2], mean)
        if saved.no_gain and point.scheduler is not Scheduler.REACTIVE:
            logger.warning(
                "No energy saved by %s at B=%s, Tp=%d, p2=%s",
                point.scheduler,
                point.bits,
                point.window,
                point.p2,
            )
        predicted = predictions.get(point.key())
        rows.append(
            SummaryRow(
                bits=point.bits,
                window=point.window,
                p2=point.p2,
                scheduler=point.scheduler,
                mean_energy=mean,
                stderr=stderr,
                n_trials=len(values),
                saved=saved,
                predicted_mean=math.fsum(predicted) / len(predicted) if predicted else None,
            ),
        )
    return rows


def check_records(records: Iterable[TrialRecord]):
    """Raise if a record breaks non-negativity or full delivery on requested trials."""
    for record in records:
        for outcome in record.outcomes:
            if outcome.energy < 0:
                raise ExperimentError(f"negative energy in trial {record.trial} at {outcome.point}")
            shortfall = abs(outcome.delivered - outcome.point.bits)
            if outcome.indicator and shortfall > DELIVERY_TOL * max(outcome.point.bits, 1.0):
                raise ExperimentError(
                    f"trial {record.trial} delivered {outcome.delivered} of {outcome.point.bits} bits",
                )


def run_experiment(
    config: ExperimentConfig,
    *,
    jobs: int = 1,
    backend: Backend | str = Backend.LOCAL,
    table_cache: Path | None = None,
) -> ExperimentResult:
    """
    Run every trial of ``config`` and aggregate them per sweep point.

    Trials are spread over ``jobs`` local workers or Celery chunks; the
    result does not depend on either.

    Returns:
        ExperimentResult: summary rows in sweep order plus the raw trial records.
    """
    logger.info("Starting experiment: seed=%d, n_trials=%d", config.seed, config.n_trials)
    records = simulate(config, jobs=jobs, backend=backend, table_cache=table_cache)
    check_records(records)
    rows = summarize(config, records)
    logger.info("Experiment finished: %d summary rows", len(rows))
    return ExperimentResult(rows=rows, records=records)
