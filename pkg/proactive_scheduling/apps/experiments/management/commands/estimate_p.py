import json
from pathlib import Path

from django.core.management.base import BaseCommand
from django.core.management.base import CommandError

from proactive_scheduling.apps.experiments.management.base import EXIT_CONFIG
from proactive_scheduling.apps.experiments.management.base import exit_codes
from proactive_scheduling.apps.experiments.reporting import format_float
from proactive_scheduling.apps.experiments.serializers import ConfigError
from proactive_scheduling.apps.experiments.serializers import MobilitySerializer
from proactive_scheduling.apps.experiments.serializers import flatten_errors
from proactive_scheduling.apps.experiments.serializers import read_config_file
from proactive_scheduling.apps.scheduling.mobility import estimate_request_probability
from proactive_scheduling.apps.scheduling.mobility import forecast_row


class Command(BaseCommand):
    help = "Print the request probability p_t for a location model, a location and a slot"

    def add_arguments(self, parser):
        parser.add_argument("--config", type=Path, help="TOML file with a [mobility] table")
        parser.add_argument("--transition", help="JSON matrix, e.g. '[[0.5, 0.5], [0.2, 0.8]]'")
        parser.add_argument("--request-stats", help="JSON vector g, e.g. '[0.1, 0.9]'")
        parser.add_argument("--location", type=int, required=True, help="1-based location index at slot t")
        parser.add_argument("--slot", type=int, required=True, help="slot index t >= 1")

    def handle(self, *args, **options):
        with exit_codes():
            data = self._mobility_data(options)
            serializer = MobilitySerializer(data=data)
            if not serializer.is_valid():
                raise ConfigError("invalid location model", flatten_errors(serializer.errors, "mobility"))
            model = serializer.build_model()

            location = options["location"]
            if not 1 <= location <= model.k:
                raise CommandError(f"--location must lie in 1..{model.k}", returncode=EXIT_CONFIG)
            if options["slot"] < 1:
                raise CommandError("--slot must be >= 1", returncode=EXIT_CONFIG)

            row = forecast_row(model, location - 1, options["slot"])
            p = estimate_request_probability(model, location - 1, options["slot"])

        t = options["slot"]
        self.stdout.write(f"row {location} of L^{t - 1}: " + " ".join(format_float(v) for v in row))
        self.stdout.write(f"p_{t} = {format_float(p)}")

    def _mobility_data(self, options) -> dict:
        if options.get("config") is not None:
            return read_config_file(options["config"]).get("mobility", {})
        if options.get("transition") is None or options.get("request_stats") is None:
            raise ConfigError("a location model needs --config or both --transition and --request-stats")
        try:
            return {
                "transition": json.loads(options["transition"]),
                "request_stats": json.loads(options["request_stats"]),
            }
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from exc
