from pathlib import Path

from celery import shared_task

from proactive_scheduling.apps.scheduling.online import ValueTables

from .engine import ExperimentConfig
from .engine import prepare_context
from .engine import simulate_chunk


@shared_task()
def simulate_trials(config: dict, start: int, stop: int, table_paths: dict[str, str]) -> list[dict]:
    """Run trials ``start..stop-1`` of a sweep and return their records as JSON dicts.

    Value tables are read from the dispatcher's cache instead of being rebuilt.
    """
    experiment = ExperimentConfig.from_dict(config)
    context = prepare_context(experiment, build_tables=False)
    context.tables = {float(bits): ValueTables.load(Path(path)) for bits, path in table_paths.items()}
    return [record.to_dict() for record in simulate_chunk(experiment, context, start, stop)]
