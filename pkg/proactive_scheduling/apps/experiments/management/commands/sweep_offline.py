from proactive_scheduling.apps.experiments.management.base import ExperimentCommand
from proactive_scheduling.apps.experiments.reporting import sweep_frame
from proactive_scheduling.apps.experiments.reporting import write_csv

DEFAULTS = {
    "seed": 0,
    "n_trials": 1000,
    "bits": [1, 2, 3, 4, 5, 6, 7, 8],
    "windows": [0, 1, 2, 4],
    "schedulers": ["offline", "reactive"],
    "channel": {"kind": "truncated_exponential", "rate": 1.0, "threshold": 0.001},
    "mobility": {"mode": "markov", "k": 3},
}


class Command(ExperimentCommand):
    help = "Expected energy of offline scheduling versus packet size for several prediction windows"
    name = "sweep_offline"
    defaults = DEFAULTS

    def write_outputs(self, result, config, out_dir):
        frame = sweep_frame(result.rows, config.mobility.mode)
        return [write_csv(frame, out_dir / f"{self.name}.csv")]
