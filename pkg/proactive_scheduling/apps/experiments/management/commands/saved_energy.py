from proactive_scheduling.apps.experiments.engine import MobilityMode
from proactive_scheduling.apps.experiments.management.base import ExperimentCommand
from proactive_scheduling.apps.experiments.reporting import saved_energy_frame
from proactive_scheduling.apps.experiments.reporting import write_csv
from proactive_scheduling.apps.experiments.serializers import ConfigError

DEFAULTS = {
    "seed": 0,
    "n_trials": 1000,
    "bits": [1, 2, 3, 4, 5, 6, 7, 8],
    "windows": [1],
    "schedulers": ["offline", "reactive"],
    "channel": {"kind": "truncated_exponential", "rate": 1.0, "threshold": 0.001},
    "mobility": {"mode": "fixed_p", "p2": [0.1, 0.5, 1.0]},
}


class Command(ExperimentCommand):
    help = "Energy saved by proactive scheduling over reactive transmission, in dB, per p2"
    name = "saved_energy"
    defaults = DEFAULTS

    def check_config(self, config):
        if config.mobility.mode is not MobilityMode.FIXED_P:
            raise ConfigError("invalid experiment config", ["mobility.mode: saved_energy needs fixed_p mode."])

    def write_outputs(self, result, config, out_dir):
        return [write_csv(saved_energy_frame(result.rows), out_dir / f"{self.name}.csv")]
