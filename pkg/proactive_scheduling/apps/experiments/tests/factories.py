import factory
from factory.django import DjangoModelFactory

from proactive_scheduling.apps.experiments.models import ExperimentRun
from proactive_scheduling.apps.experiments.models import RunStatus


class ExperimentRunFactory(DjangoModelFactory):
    class Meta:
        model = ExperimentRun

    command = factory.Iterator(["sweep_offline", "sweep_online", "saved_energy"])
    status = RunStatus.PENDING
    seed = factory.Sequence(str)
    config = factory.LazyFunction(
        lambda: {"bits": [1.0, 2.0], "windows": [0, 1], "schedulers": ["offline", "reactive"], "n_trials": 10},
    )
    output_dir = factory.Sequence(lambda n: f"results/run-{n:03d}")
