"""CSV and manifest emission.

Every float is rendered with 9 significant digits before it reaches pandas so
the files are byte-stable; the files never embed timestamps (those live in the
manifest next to them).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .engine import MobilityMode
from .engine import Scheduler
from .engine import SummaryRow
from .engine import TrialRecord

logger = logging.getLogger(__name__)

NO_GAIN = "no-gain"

SWEEP_COLUMNS = [
    "bits",
    "window",
    "scheduler",
    "mean_energy",
    "stderr",
    "n_trials",
    "saved_db",
    "saved_db_ratio",
    "predicted_mean",
]
SAVED_ENERGY_COLUMNS = [
    "bits",
    "window",
    "p2",
    "scheduler",
    "reactive_mean",
    "proactive_mean",
    "saved_db",
    "saved_db_ratio",
    "no_gain",
]
TRIAL_COLUMNS = [
    "trial",
    "digest",
    "final_location",
    "indicator",
    "bits",
    "window",
    "p2",
    "scheduler",
    "energy",
]


def format_float(value: float | None) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.9g}"


def _saved_cells(row: SummaryRow) -> tuple[str, str]:
    if row.saved.no_gain:
        return NO_GAIN, NO_GAIN
    return format_float(row.saved.difference_db), format_float(row.saved.ratio_db)


def sweep_frame(rows: list[SummaryRow], mode: MobilityMode = MobilityMode.MARKOV) -> pd.DataFrame:
    """One record per (B, Tp, scheduler[, p2])."""
    columns = list(SWEEP_COLUMNS)
    if mode is MobilityMode.FIXED_P:
        columns.insert(2, "p2")
    records = []
    for row in rows:
        saved_db, saved_ratio = _saved_cells(row)
        records.append(
            {
                "bits": format_float(row.bits),
                "window": str(row.window),
                "p2": format_float(row.p2),
                "scheduler": str(row.scheduler),
                "mean_energy": format_float(row.mean_energy),
                "stderr": format_float(row.stderr),
                "n_trials": str(row.n_trials),
                "saved_db": saved_db,
                "saved_db_ratio": saved_ratio,
                "predicted_mean": format_float(row.predicted_mean),
            },
        )
    return pd.DataFrame(records, columns=columns)


def saved_energy_frame(rows: list[SummaryRow]) -> pd.DataFrame:
    """Savings of each proactive scheduler against reactive, per (B, Tp, p2)."""
    reactive = {
        (row.bits, row.p2): row.mean_energy for row in rows if row.scheduler is Scheduler.REACTIVE
    }
    records = []
    for row in rows:
        if row.scheduler is Scheduler.REACTIVE:
            continue
        saved_db, saved_ratio = _saved_cells(row)
        records.append(
            {
                "bits": format_float(row.bits),
                "window": str(row.window),
                "p2": format_float(row.p2),
                "scheduler": str(row.scheduler),
                "reactive_mean": format_float(reactive.get((row.bits, row.p2))),
                "proactive_mean": format_float(row.mean_energy),
                "saved_db": saved_db,
                "saved_db_ratio": saved_ratio,
                "no_gain": "true" if row.saved.no_gain else "false",
            },
        )
    return pd.DataFrame(records, columns=SAVED_ENERGY_COLUMNS)


def trials_frame(records: list[TrialRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        for outcome in record.outcomes:
            rows.append(
                {
                    "trial": str(record.trial),
                    "digest": record.digest,
                    "final_location": "" if record.final_location is None else str(record.final_location),
                    "indicator": str(outcome.indicator),
                    "bits": format_float(outcome.point.bits),
                    "window": str(outcome.point.window),
                    "p2": format_float(outcome.point.p2),
                    "scheduler": str(outcome.point.scheduler),
                    "energy": format_float(outcome.energy),
                },
            )
    return pd.DataFrame(rows, columns=TRIAL_COLUMNS)


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    started: str
    finished: str
    wall_clock: float
    jobs: int
    backend: str
    outputs: list[str]

    def to_dict(self) -> dict:
        data = asdict(self)
        # doubles in JSON readers lose integers above 2**53
        data["seed"] = str(self.seed)
        return data


def manifest_path(csv_path: Path) -> Path:
    return Path(csv_path).with_suffix(".manifest.json")


def write_manifest(manifest: RunManifest, csv_path: Path) -> Path:
    path = manifest_path(csv_path)
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
