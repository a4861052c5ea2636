import pytest
from celery.result import EagerResult

from proactive_scheduling.apps.experiments.engine import ExperimentConfig
from proactive_scheduling.apps.experiments.engine import Scheduler
from proactive_scheduling.apps.experiments.engine import TrialRecord
from proactive_scheduling.apps.experiments.engine import run_trial
from proactive_scheduling.apps.experiments.tables import load_or_build_tables
from proactive_scheduling.apps.experiments.tasks import simulate_trials
from proactive_scheduling.apps.scheduling.online import GridSpec

pytestmark = pytest.mark.django_db


def test_simulate_trials(settings):
    """A chunk of trials runs as a Celery task and matches the in-process records."""
    config = ExperimentConfig(
        bits=(2.0,),
        windows=(0, 1),
        schedulers=(Scheduler.OFFLINE, Scheduler.CES, Scheduler.REACTIVE),
        n_trials=10,
        seed=3,
    )
    settings.CELERY_TASK_ALWAYS_EAGER = True
    task_result = simulate_trials.delay(config.to_dict(), 4, 7, {})
    assert isinstance(task_result, EagerResult)
    records = [TrialRecord.from_dict(record) for record in task_result.result]
    assert [record.trial for record in records] == [4, 5, 6]
    assert records == [run_trial(config, trial) for trial in range(4, 7)]


def test_simulate_trials_reads_cached_tables(settings, tmp_path):
    """The dp scheduler on a worker uses the dispatcher's table file."""
    grids = GridSpec(n_beta=17, n_p=9, n_b=33, n_h=16)
    config = ExperimentConfig(
        bits=(2.0,),
        windows=(2,),
        schedulers=(Scheduler.DP, Scheduler.REACTIVE),
        n_trials=4,
        seed=3,
        grids=grids,
    )
    _, path = load_or_build_tables(config.channel, 2.0, 2, grids, tmp_path)
    settings.CELERY_TASK_ALWAYS_EAGER = True
    task_result = simulate_trials.delay(config.to_dict(), 0, 4, {"2.0": str(path)})
    records = [TrialRecord.from_dict(record) for record in task_result.result]
    assert len(records) == 4
    dp = [o for record in records for o in record.outcomes if o.point.scheduler is Scheduler.DP]
    assert all(o.predicted is not None for o in dp)
