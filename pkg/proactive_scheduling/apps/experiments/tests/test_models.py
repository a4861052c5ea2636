"""Tests for experiment run records."""

from django.test import TestCase

from proactive_scheduling.apps.experiments.models import ExperimentRun
from proactive_scheduling.apps.experiments.models import RunStatus
from proactive_scheduling.apps.experiments.tests.factories import ExperimentRunFactory


class TestExperimentRunModel(TestCase):
    """Test ExperimentRun model."""

    def test_str_representation(self):
        """Test run string representation."""
        run = ExperimentRunFactory(command="sweep_offline", seed="42")
        self.assertEqual(str(run), "sweep_offline seed=42 (pending)")

    def test_u64_seed_round_trips(self):
        """Test that seeds above the signed 64-bit range are stored intact."""
        seed = str(2**64 - 1)
        run = ExperimentRunFactory(seed=seed)
        run.refresh_from_db()
        self.assertEqual(int(run.seed), 2**64 - 1)

    def test_ordering(self):
        """Test runs are ordered newest first."""
        first = ExperimentRunFactory()
        second = ExperimentRunFactory()
        third = ExperimentRunFactory()
        self.assertEqual(list(ExperimentRun.available_objects.all()), [third, second, first])

    def test_lifecycle(self):
        """Test pending -> running -> completed transitions."""
        run = ExperimentRunFactory()
        run.mark_running()
        run.refresh_from_db()
        self.assertEqual(run.status, RunStatus.RUNNING)

        summary = [{"bits": 1.0, "window": 1, "mean_energy": 2.5}]
        run.mark_completed(manifest={"seed": "7"}, summary=summary, wall_clock=1.25)
        run.refresh_from_db()
        self.assertEqual(run.status, RunStatus.COMPLETED)
        self.assertEqual(run.manifest, {"seed": "7"})
        self.assertEqual(run.summary, summary)
        self.assertEqual(run.wall_clock, 1.25)

    def test_failure_keeps_error(self):
        """Test a failed run records its error message."""
        run = ExperimentRunFactory()
        run.mark_failed("simulation failed: boom")
        run.refresh_from_db()
        self.assertEqual(run.status, RunStatus.FAILED)
        self.assertEqual(run.error, "simulation failed: boom")

    def test_soft_delete(self):
        """Test removed runs drop out of the default listing."""
        run = ExperimentRunFactory()
        run.delete()
        self.assertFalse(ExperimentRun.available_objects.filter(pk=run.pk).exists())
        self.assertTrue(ExperimentRun.all_objects.filter(pk=run.pk).exists())
