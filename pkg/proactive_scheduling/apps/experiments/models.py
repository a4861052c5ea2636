from django.db import models

from proactive_scheduling.utils.models import BaseModel


class RunStatus(models.TextChoices):
    PENDING = "pending", "Pending"
    RUNNING = "running", "Running"
    COMPLETED = "completed", "Completed"
    FAILED = "failed", "Failed"


class ExperimentRun(BaseModel):
    """Book-keeping for one command invocation run with ``--record``."""

    command = models.CharField(max_length=50)
    status = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.PENDING)
    # u64 seeds do not fit a signed bigint column
    seed = models.CharField(max_length=20)
    config = models.JSONField(default=dict)
    manifest = models.JSONField(default=dict, blank=True)
    summary = models.JSONField(default=list, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    wall_clock = models.FloatField(null=True, blank=True)
    error = models.TextField(blank=True)

    class Meta:
        ordering = ["-created"]

    def __str__(self):
        return f"{self.command} seed={self.seed} ({self.status})"

    def mark_running(self):
        self.status = RunStatus.RUNNING
        self.save(update_fields=["status", "modified"])

    def mark_completed(self, *, manifest: dict, summary: list, wall_clock: float):
        self.status = RunStatus.COMPLETED
        self.manifest = manifest
        self.summary = summary
        self.wall_clock = wall_clock
        self.save(update_fields=["status", "manifest", "summary", "wall_clock", "modified"])

    def mark_failed(self, error: str):
        self.status = RunStatus.FAILED
        self.error = error
        self.save(update_fields=["status", "error", "modified"])
