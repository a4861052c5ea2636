import logging
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from django.utils import timezone
from joblib import cpu_count

from proactive_scheduling import __version__
from proactive_scheduling.apps.experiments.engine import Backend
from proactive_scheduling.apps.experiments.engine import ExperimentConfig
from proactive_scheduling.apps.experiments.engine import ExperimentResult
from proactive_scheduling.apps.experiments.engine import run_experiment
from proactive_scheduling.apps.experiments.models import ExperimentRun
from proactive_scheduling.apps.experiments.models import RunStatus
from proactive_scheduling.apps.experiments.reporting import RunManifest
from proactive_scheduling.apps.experiments.reporting import trials_frame
from proactive_scheduling.apps.experiments.reporting import write_csv
from proactive_scheduling.apps.experiments.reporting import write_manifest
from proactive_scheduling.apps.experiments.serializers import load_config

logger = logging.getLogger(__name__)

# (result, config, output dir) -> CSV files written
OutputWriter = Callable[[ExperimentResult, ExperimentConfig, Path], list[Path]]


@dataclass(frozen=True)
class RunOptions:
    """Command options after applying flag > environment > default precedence.

    ``seed`` stays None when neither a flag nor the environment sets it, so
    the config file (or the command default) decides.
    """

    config_path: Path | None
    seed: int | None
    jobs: int
    out_dir: Path
    backend: Backend
    table_cache: Path
    dump_trials: bool
    record: bool

    @classmethod
    def resolve(cls, options: dict) -> "RunOptions":
        def pick(flag, setting):
            value = options.get(flag)
            return value if value is not None else getattr(settings, setting)

        out_dir = Path(pick("out", "SIMULATION_OUTPUT_DIR"))
        config_path = pick("config", "SIMULATION_CONFIG")
        table_cache = pick("table_cache", "SIMULATION_TABLE_CACHE")
        jobs = int(pick("jobs", "SIMULATION_JOBS"))
        return cls(
            config_path=Path(config_path) if config_path else None,
            seed=pick("seed", "SIMULATION_SEED"),
            jobs=jobs if jobs > 0 else cpu_count(),
            out_dir=out_dir,
            backend=Backend(pick("backend", "SIMULATION_BACKEND")),
            table_cache=Path(table_cache) if table_cache else out_dir / "tables",
            dump_trials=bool(options.get("dump_trials")),
            record=bool(options.get("record")),
        )

    def overrides(self) -> dict:
        data = {}
        if self.seed is not None:
            data["seed"] = int(self.seed)
        if self.dump_trials:
            data["dump_trials"] = True
        return data


@dataclass(frozen=True)
class RunOutcome:
    config: ExperimentConfig
    result: ExperimentResult
    outputs: list[Path]
    manifest: RunManifest
    run: ExperimentRun | None = None


class ExperimentService:
    """Runs one sweep command end to end: config, simulation, files, run record."""

    def __init__(
        self,
        command: str,
        name: str,
        defaults: dict,
        writer: OutputWriter,
        validate: Callable[[ExperimentConfig], None] | None = None,
    ):
        self.command = command
        self.name = name
        self.defaults = defaults
        self.writer = writer
        self.validate = validate

    def load(self, options: RunOptions) -> ExperimentConfig:
        config = load_config(options.config_path, self.defaults, options.overrides())
        if self.validate is not None:
            self.validate(config)
        return config

    def run(self, options: RunOptions) -> RunOutcome:
        config = self.load(options)
        run = self._start_record(config, options) if options.record else None

        started = timezone.now()
        clock = time.perf_counter()
        try:
            result = run_experiment(
                config,
                jobs=options.jobs,
                backend=options.backend,
                table_cache=options.table_cache,
            )
            outputs = self.writer(result, config, options.out_dir)
            if config.dump_trials:
                outputs.append(write_csv(trials_frame(result.records), options.out_dir / f"{self.name}.trials.csv"))

            manifest = RunManifest(
                command=self.command,
                config=config.to_dict(),
                seed=config.seed,
                version=__version__,
                started=started.isoformat(),
                finished=timezone.now().isoformat(),
                wall_clock=time.perf_counter() - clock,
                jobs=options.jobs,
                backend=str(options.backend),
                outputs=[str(path) for path in outputs],
            )
            for path in outputs:
                write_manifest(manifest, path)
        except Exception as exc:
            logger.exception("%s failed", self.command)
            if run is not None:
                run.mark_failed(str(exc))
            raise

        logger.info(
            "%s finished in %.2fs, outputs: %s",
            self.command,
            manifest.wall_clock,
            ", ".join(manifest.outputs),
        )
        if run is not None:
            run.mark_completed(
                manifest=manifest.to_dict(),
                summary=[row.to_dict() for row in result.rows],
                wall_clock=manifest.wall_clock,
            )
        return RunOutcome(config=config, result=result, outputs=outputs, manifest=manifest, run=run)

    def _start_record(self, config: ExperimentConfig, options: RunOptions) -> ExperimentRun:
        run = ExperimentRun.available_objects.create(
            command=self.command,
            status=RunStatus.PENDING,
            seed=str(config.seed),
            config=config.to_dict(),
            output_dir=str(options.out_dir),
        )
        run.mark_running()
        return run
