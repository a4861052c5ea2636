import numpy as np
import pytest

from proactive_scheduling.apps.experiments import tables as table_cache
from proactive_scheduling.apps.experiments.tables import load_or_build_tables
from proactive_scheduling.apps.experiments.tables import table_key
from proactive_scheduling.apps.experiments.tables import table_path
from proactive_scheduling.apps.scheduling.channel import TruncatedExponentialChannel
from proactive_scheduling.apps.scheduling.online import GridSpec

GRIDS = GridSpec(n_beta=17, n_p=9, n_b=33, n_h=16)
CHANNEL = TruncatedExponentialChannel(rate=1.0, threshold=0.001)


def test_key_depends_on_every_input():
    key = table_key(CHANNEL, 4.0, 3, GRIDS)
    assert key == table_key(TruncatedExponentialChannel(), 4, 3, GridSpec(n_beta=17, n_p=9, n_b=33, n_h=16))
    assert key != table_key(CHANNEL, 4.5, 3, GRIDS)
    assert key != table_key(CHANNEL, 4.0, 2, GRIDS)
    assert key != table_key(TruncatedExponentialChannel(threshold=0.01), 4.0, 3, GRIDS)
    assert key != table_key(CHANNEL, 4.0, 3, GridSpec(n_beta=33, n_p=9, n_b=33, n_h=16))


def test_no_cache_dir_builds_in_memory():
    tables, path = load_or_build_tables(CHANNEL, 2.0, 2, GRIDS)
    assert path is None
    assert tables.horizon == 2


def test_cache_miss_then_hit(tmp_path, monkeypatch):
    built, path = load_or_build_tables(CHANNEL, 2.0, 3, GRIDS, tmp_path / "cache")
    assert path == table_path(tmp_path / "cache", CHANNEL, 2.0, 3, GRIDS)
    assert path.exists()

    def refuse(*args, **kwargs):
        pytest.fail("tables were rebuilt despite a cache hit")

    monkeypatch.setattr(table_cache, "build_value_tables", refuse)
    loaded, again = load_or_build_tables(CHANNEL, 2.0, 3, GRIDS, tmp_path / "cache")
    assert again == path
    assert loaded.grids == GRIDS
    for t in range(1, 4):
        np.testing.assert_array_equal(loaded.stage(t), built.stage(t))
