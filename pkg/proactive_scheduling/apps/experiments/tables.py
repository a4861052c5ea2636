"""On-disk cache of DP value tables, keyed by everything the build depends on."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

from proactive_scheduling.apps.scheduling.channel import ChannelModel
from proactive_scheduling.apps.scheduling.online import GridSpec
from proactive_scheduling.apps.scheduling.online import ValueTables
from proactive_scheduling.apps.scheduling.online import build_value_tables

logger = logging.getLogger(__name__)


def table_key(model: ChannelModel, bits: float, window: int, grids: GridSpec) -> str:
    payload = json.dumps(
        {"channel": model.describe(), "bits": float(bits), "window": int(window), "grids": grids.to_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def table_path(cache_dir: Path, model: ChannelModel, bits: float, window: int, grids: GridSpec) -> Path:
    return Path(cache_dir) / f"tables-{table_key(model, bits, window, grids)[:24]}.npz"


def load_or_build_tables(
    model: ChannelModel,
    bits: float,
    window: int,
    grids: GridSpec,
    cache_dir: Path | None = None,
) -> tuple[ValueTables, Path | None]:
    """Tables for (model, B, horizon) plus the cache file they live in, if any."""
    if cache_dir is None:
        return build_value_tables(model, bits, window, grids), None

    path = table_path(cache_dir, model, bits, window, grids)
    if path.exists():
        logger.info("Value-table cache hit for B=%s, Tp=%d: %s", bits, window, path.name)
        return ValueTables.load(path), path

    logger.info("Value-table cache miss for B=%s, Tp=%d, building", bits, window)
    tables = build_value_tables(model, bits, window, grids)
    path.parent.mkdir(parents=True, exist_ok=True)
    tables.save(path)
    return tables, path
