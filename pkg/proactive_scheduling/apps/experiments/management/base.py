from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import BaseCommand
from django.core.management.base import CommandError

from proactive_scheduling.apps.experiments.engine import Backend
from proactive_scheduling.apps.experiments.engine import ExperimentConfig
from proactive_scheduling.apps.experiments.engine import ExperimentError
from proactive_scheduling.apps.experiments.engine import ExperimentResult
from proactive_scheduling.apps.experiments.serializers import ConfigError
from proactive_scheduling.apps.experiments.services.services import ExperimentService
from proactive_scheduling.apps.experiments.services.services import RunOptions
from proactive_scheduling.apps.scheduling.core import SchedulingError

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


@contextmanager
def exit_codes():
    """Map library errors onto the documented command exit codes."""
    try:
        yield
    except ConfigError as exc:
        raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc
    except SchedulingError as exc:
        raise CommandError(f"numerical failure: {exc}", returncode=EXIT_NUMERICAL) from exc
    except OSError as exc:
        raise CommandError(f"I/O error: {exc}", returncode=EXIT_IO) from exc
    except ExperimentError as exc:
        raise CommandError(str(exc), returncode=EXIT_FAILURE) from exc


class ExperimentCommand(BaseCommand):
    """Shared flags and error handling of the sweep commands."""

    name: str
    defaults: dict

    def add_arguments(self, parser):
        parser.add_argument("--config", type=Path, help="TOML experiment config")
        parser.add_argument("--seed", type=int, help="master seed (u64), overrides the config file")
        parser.add_argument("--jobs", type=int, help="parallel workers, default all cores")
        parser.add_argument("--out", type=Path, help="output directory")
        parser.add_argument("--backend", choices=[b.value for b in Backend])
        parser.add_argument("--table-cache", type=Path, help="value-table cache directory")
        parser.add_argument("--dump-trials", action="store_true", help="also write per-trial records")
        parser.add_argument("--record", action="store_true", help="store the run in the database")

    def check_config(self, config: ExperimentConfig):
        """Command-specific constraints beyond the config schema."""

    def write_outputs(self, result: ExperimentResult, config: ExperimentConfig, out_dir: Path) -> list[Path]:
        raise NotImplementedError

    def handle(self, *args, **options):
        service = ExperimentService(
            command=self.name,
            name=self.name,
            defaults=self.defaults,
            writer=self.write_outputs,
            validate=self.check_config,
        )
        with exit_codes():
            if options.get("seed") is not None and not 0 <= options["seed"] < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            outcome = service.run(RunOptions.resolve(options))
        for path in outcome.outputs:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
