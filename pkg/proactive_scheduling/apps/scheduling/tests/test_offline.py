import math

import numpy as np
from django.test import SimpleTestCase
from scipy import optimize

from proactive_scheduling.apps.scheduling.core import ContractError
from proactive_scheduling.apps.scheduling.core import PacketSpec
from proactive_scheduling.apps.scheduling.core import reactive_energy
from proactive_scheduling.apps.scheduling.offline import BruteForceRefusedError
from proactive_scheduling.apps.scheduling.offline import OfflineInstance
from proactive_scheduling.apps.scheduling.offline import brute_force_allocation
from proactive_scheduling.apps.scheduling.offline import run_offline_episode
from proactive_scheduling.apps.scheduling.offline import schedule_step
from proactive_scheduling.apps.scheduling.offline import schedule_tp1
from proactive_scheduling.apps.scheduling.offline import solve_window
from proactive_scheduling.apps.scheduling.offline import tp1_objective
from proactive_scheduling.apps.scheduling.offline import tp1_objective_derivatives
from proactive_scheduling.apps.scheduling.offline import waterfill
from proactive_scheduling.apps.scheduling.offline import window_objective


def random_instance(rng, t):
    return OfflineInstance.build(
        t=t,
        beta=rng.uniform(0.5, 8.0),
        channels=rng.uniform(0.25, 4.0, size=t),
        p=rng.uniform(0.05, 1.0),
    )


def dual_bisection(inst, tol=1e-14):
    """Window solution by bisection on the multiplier of the bit budget."""
    gains = np.asarray(inst.channels, dtype=float)
    gains[-1] /= inst.p

    def bits_at(level):
        return np.maximum(np.log2(gains * level), 0.0)

    lo, hi = 0.0, 2.0**inst.beta / gains.min()
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if bits_at(mid).sum() < inst.beta:
            lo = mid
        else:
            hi = mid
    return bits_at(0.5 * (lo + hi))


def kkt_residual(bits, inst):
    """Largest violation of the optimality conditions of the window problem."""
    gains = np.asarray(inst.channels, dtype=float)
    weights = np.ones(inst.t)
    weights[-1] = inst.p
    marginal = math.log(2) * weights * np.exp2(bits) / gains
    active = bits > 1e-12
    level = marginal[active].mean()
    stationarity = np.abs(marginal[active] - level).max() / level
    dual = max(0.0, (level - marginal[~active]).max() / level) if (~active).any() else 0.0
    return max(stationarity, dual, abs(bits.sum() - inst.beta), max(0.0, -bits.min()))


def slsqp_solution(inst):
    gains = np.asarray(inst.channels, dtype=float)
    scale = window_objective(np.full(inst.t, inst.beta / inst.t), inst)

    def objective(b):
        return window_objective(b, inst) / scale

    def gradient(b):
        grad = math.log(2) * np.exp2(b) / gains
        grad[-1] *= inst.p
        return grad / scale

    result = optimize.minimize(
        objective,
        np.full(inst.t, inst.beta / inst.t),
        jac=gradient,
        method="SLSQP",
        bounds=[(0.0, inst.beta)] * inst.t,
        constraints=[{"type": "eq", "fun": lambda b: b.sum() - inst.beta, "jac": lambda b: np.ones_like(b)}],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    return result.x


class TestScheduleTp1(SimpleTestCase):
    """Test the one-slot-window closed form."""

    def test_known_values(self):
        self.assertAlmostEqual(schedule_tp1(2, 1, 1, 1), 1.0, places=14)
        self.assertAlmostEqual(schedule_tp1(4, 2**-4 / 0.8, 1, 0.8), 0.0, places=12)
        self.assertAlmostEqual(schedule_tp1(2, 1, 1, 0.5), 0.5, places=14)
        self.assertEqual(schedule_tp1(3, 5.0, 0.1, 0.0), 0.0)

    def test_clamps_to_packet(self):
        self.assertEqual(schedule_tp1(2, 1000.0, 0.001, 1.0), 2.0)
        self.assertEqual(schedule_tp1(2, 0.001, 1000.0, 1.0), 0.0)

    def test_against_grid_search(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            bits = rng.uniform(0.1, 10.0)
            h2, h1 = rng.uniform(0.01, 5.0, size=2)
            p2 = rng.uniform(0.0, 1.0)
            coarse = np.linspace(0.0, bits, 1001)
            centre = coarse[np.argmin(tp1_objective(coarse, bits, h2, h1, p2))]
            lo, hi = max(centre - 0.02, 0.0), min(centre + 0.02, bits)
            fine = np.linspace(lo, hi, round((hi - lo) / 1e-5) + 1)
            oracle = fine[np.argmin(tp1_objective(fine, bits, h2, h1, p2))]
            self.assertLess(abs(schedule_tp1(bits, h2, h1, p2) - oracle), 2e-5)

    def test_objective_is_convex_with_stationary_solution(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            bits = rng.uniform(1.0, 6.0)
            h2, h1 = rng.uniform(0.3, 3.0, size=2)
            p2 = rng.uniform(0.1, 1.0)
            grid = np.linspace(0.0, bits, 50)
            _, second = tp1_objective_derivatives(grid, bits, h2, h1, p2)
            self.assertTrue(np.all(second > 0))
            b = schedule_tp1(bits, h2, h1, p2)
            if 1e-9 < b < bits - 1e-9:
                first, _ = tp1_objective_derivatives(b, bits, h2, h1, p2)
                self.assertAlmostEqual(float(first), 0.0, delta=1e-9 * (1 + 2**bits))

    def test_monotone_in_deadline_gain_and_probability(self):
        rng = np.random.default_rng(16)
        for _ in range(200):
            bits = rng.uniform(0.5, 8.0)
            h2, h1 = rng.uniform(0.05, 5.0, size=2)
            p2 = rng.uniform(0.0, 1.0)
            by_h1 = [schedule_tp1(bits, h2, h, p2) for h in np.geomspace(0.01, 100.0, 25)]
            by_p2 = [schedule_tp1(bits, h2, h1, p) for p in np.linspace(0.0, 1.0, 25)]
            self.assertTrue(all(b <= a + 1e-12 for a, b in zip(by_h1, by_h1[1:], strict=False)))
            self.assertTrue(all(b >= a - 1e-12 for a, b in zip(by_p2, by_p2[1:], strict=False)))

    def test_subnormal_probability(self):
        self.assertEqual(schedule_tp1(2, 0.001, 1, 1e-322), 0.0)
        self.assertEqual(schedule_tp1(2, 1e300, 1e-300, 1e-320), 2.0)

    def test_bad_input(self):
        with self.assertRaises(ContractError):
            schedule_tp1(2, 1, 1, 1.5)


class TestWaterfill(SimpleTestCase):
    """Test the parallel-slot water-filling solve."""

    def test_equal_gains_split_evenly(self):
        solution = waterfill([2.0, 2.0, 2.0], 3.0)
        np.testing.assert_allclose(solution.bits, [1.0, 1.0, 1.0], atol=1e-12)
        self.assertEqual(solution.state.size, 3)

    def test_weak_slot_is_dropped(self):
        solution = waterfill([4.0, 4.0, 0.01], 2.0)
        self.assertEqual(solution.state.active, (0, 1))
        np.testing.assert_allclose(solution.bits, [1.0, 1.0, 0.0], atol=1e-12)

    def test_threshold_consistency(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            gains = rng.uniform(0.05, 5.0, size=int(rng.integers(2, 8)))
            beta = rng.uniform(0.1, 6.0)
            solution = waterfill(gains, beta)
            active = np.zeros(gains.size, dtype=bool)
            active[list(solution.state.active)] = True
            threshold = solution.state.threshold
            self.assertTrue(np.all(gains[active] > threshold))
            self.assertTrue(np.all(gains[~active] <= threshold))
            expected = 2 ** (-beta / active.sum()) * math.exp(np.log(gains[active]).mean())
            self.assertAlmostEqual(threshold, expected, delta=1e-12 * expected)
            self.assertAlmostEqual(float(solution.bits.sum()), beta, places=10)

    def test_nothing_to_send(self):
        solution = waterfill([1.0, 2.0], 0.0)
        np.testing.assert_array_equal(solution.bits, [0.0, 0.0])


class TestScheduleStep(SimpleTestCase):
    """Test the multi-slot offline policy."""

    def test_symmetric_split(self):
        inst = OfflineInstance.build(t=3, beta=3.0, channels=[1.5, 1.5, 1.5], p=1.0)
        self.assertAlmostEqual(schedule_step(inst), 1.0, places=12)

    def test_zero_probability_or_budget(self):
        rng = np.random.default_rng(4)
        inst = random_instance(rng, 4)
        self.assertEqual(schedule_step(OfflineInstance.build(4, inst.beta, inst.channels, 0.0)), 0.0)
        self.assertEqual(schedule_step(OfflineInstance.build(4, 0.0, inst.channels, 0.5)), 0.0)

    def test_pinned_instance(self):
        inst = OfflineInstance.build(t=4, beta=3.0, channels=[0.5, 2.0, 1.0, 1.0], p=0.8)
        oracle = dual_bisection(inst)
        self.assertAlmostEqual(schedule_step(inst), oracle[0], delta=1e-4)
        self.assertLess(kkt_residual(solve_window(inst).bits, inst), 1e-8)

    def test_against_dual_bisection(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            inst = random_instance(rng, int(rng.integers(3, 6)))
            bits = solve_window(inst).bits
            np.testing.assert_allclose(bits, dual_bisection(inst), atol=1e-9)
            self.assertLess(kkt_residual(bits, inst), 1e-8)
            self.assertAlmostEqual(schedule_step(inst), min(bits[0], inst.beta), delta=1e-12)

    def test_against_slsqp(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            inst = random_instance(rng, int(rng.integers(3, 6)))
            np.testing.assert_allclose(solve_window(inst).bits, slsqp_solution(inst), atol=1e-4)

    def test_matches_closed_form_for_one_slot_window(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            bits = rng.uniform(0.5, 8.0)
            h2, h1 = rng.uniform(0.1, 4.0, size=2)
            p2 = rng.uniform(0.01, 1.0)
            inst = OfflineInstance.build(t=2, beta=bits, channels=[h2, h1], p=p2)
            self.assertAlmostEqual(schedule_step(inst), schedule_tp1(bits, h2, h1, p2), delta=1e-10)

    def test_scale_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            inst = random_instance(rng, 4)
            factor = rng.uniform(0.01, 100.0)
            scaled = OfflineInstance.build(inst.t, inst.beta, np.asarray(inst.channels) * factor, inst.p)
            self.assertAlmostEqual(schedule_step(inst), schedule_step(scaled), delta=1e-9)

    def test_monotone_in_current_gain_and_probability(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            inst = random_instance(rng, 4)
            rest = inst.channels[1:]
            by_gain = [
                schedule_step(OfflineInstance.build(4, inst.beta, [h, *rest], inst.p)) for h in (0.2, 0.8, 2.0, 6.0)
            ]
            by_p = [
                schedule_step(OfflineInstance.build(4, inst.beta, inst.channels, p)) for p in (0.1, 0.4, 0.7, 1.0)
            ]
            self.assertTrue(all(b >= a - 1e-12 for a, b in zip(by_gain, by_gain[1:], strict=False)))
            self.assertTrue(all(b >= a - 1e-12 for a, b in zip(by_p, by_p[1:], strict=False)))

    def test_subnormal_probability(self):
        inst = OfflineInstance.build(t=2, beta=2.0, channels=[1.0, 1.0], p=1e-320)
        self.assertEqual(schedule_step(inst), 0.0)
        np.testing.assert_allclose(solve_window(inst).bits, [0.0, 2.0])
        inst = OfflineInstance.build(t=4, beta=3.0, channels=[5.0, 0.5, 2.0, 0.1], p=5e-324)
        self.assertEqual(schedule_step(inst), 0.0)
        self.assertEqual(solve_window(inst).state.active, (3,))

    def test_needs_window_slot(self):
        with self.assertRaises(ContractError):
            schedule_step(OfflineInstance.build(t=1, beta=2.0, channels=[1.0], p=1.0))

    def test_instance_validation(self):
        with self.assertRaises(ContractError):
            OfflineInstance.build(t=3, beta=1.0, channels=[1.0, 1.0], p=0.5)
        with self.assertRaises(ContractError):
            OfflineInstance.build(t=2, beta=-1.0, channels=[1.0, 1.0], p=0.5)


class TestBruteForce(SimpleTestCase):
    """Test the grid-search oracle against the analytic policy."""

    def test_objective_never_beats_analytic(self):
        rng = np.random.default_rng(10)
        for _ in range(40):
            inst = random_instance(rng, 3)
            oracle = brute_force_allocation(inst)
            analytic = window_objective(solve_window(inst).bits, inst)
            self.assertGreaterEqual(window_objective(oracle.bits, inst), analytic - 1e-6)
            self.assertAlmostEqual(oracle.total, inst.beta, places=9)

    def test_allocation_agrees_with_analytic(self):
        rng = np.random.default_rng(11)
        for t, count in ((2, 40), (3, 30), (4, 15)):
            for _ in range(count):
                inst = random_instance(rng, t)
                oracle = brute_force_allocation(inst, grid_step=5e-4)
                np.testing.assert_allclose(oracle.bits, solve_window(inst).bits, atol=2e-3)

    def test_refuses_long_windows(self):
        inst = OfflineInstance.build(t=6, beta=2.0, channels=[1.0] * 6, p=0.5)
        with self.assertRaises(BruteForceRefusedError):
            brute_force_allocation(inst)

    def test_trivial_instances(self):
        self.assertEqual(brute_force_allocation(OfflineInstance.build(1, 2.0, [1.0], 1.0)).bits, (2.0,))
        self.assertEqual(brute_force_allocation(OfflineInstance.build(2, 0.0, [1.0, 1.0], 1.0)).bits, (0.0, 0.0))


class TestOfflineEpisode(SimpleTestCase):
    """Test whole-window offline episodes."""

    def test_no_window_is_reactive(self):
        result = run_offline_episode(PacketSpec(bits=3.0, window=0), [0.7], [], 1)
        self.assertEqual(result.allocation.bits, (3.0,))
        self.assertAlmostEqual(result.energy, reactive_energy(3.0, 0.7, 1), places=12)

    def test_one_slot_window_uses_closed_form(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            bits = rng.uniform(0.5, 6.0)
            h2, h1 = rng.uniform(0.1, 3.0, size=2)
            p2 = rng.uniform(0.0, 1.0)
            result = run_offline_episode(PacketSpec(bits=bits, window=1), [h2, h1], [p2], 1)
            b2 = schedule_tp1(bits, h2, h1, p2)
            self.assertAlmostEqual(result.allocation.bits[0], b2, delta=1e-10)
            self.assertAlmostEqual(result.allocation.bits[1], bits - b2, delta=1e-10)

    def test_scaled_gains_scale_energy(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            window = int(rng.integers(1, 5))
            spec = PacketSpec(bits=rng.uniform(0.5, 6.0), window=window)
            channels = rng.uniform(0.1, 4.0, size=window + 1)
            p_sequence = rng.uniform(0.05, 1.0, size=window)
            indicator = int(rng.integers(2))
            factor = rng.uniform(0.01, 100.0)
            base = run_offline_episode(spec, channels, p_sequence, indicator)
            scaled = run_offline_episode(spec, factor * channels, p_sequence, indicator)
            np.testing.assert_allclose(scaled.allocation.bits, base.allocation.bits, atol=1e-9)
            self.assertAlmostEqual(scaled.energy, base.energy / factor, delta=1e-8 * (1 + base.energy / factor))

    def test_subnormal_probability_keeps_bits_for_deadline(self):
        result = run_offline_episode(PacketSpec(bits=2.0, window=2), [1.0, 1.0, 1.0], [1e-320, 1e-320], 0)
        self.assertEqual(result.allocation.bits, (0.0, 0.0, 2.0))
        self.assertEqual(result.energy, 0.0)

    def test_budget_is_delivered(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            window = int(rng.integers(1, 6))
            spec = PacketSpec(bits=rng.uniform(0.5, 8.0), window=window)
            channels = rng.uniform(0.1, 4.0, size=window + 1)
            p = rng.uniform(0.0, 1.0)
            result = run_offline_episode(spec, channels, [p] * window, int(rng.integers(2)))
            self.assertAlmostEqual(result.allocation.total, spec.bits, places=9)
            self.assertGreaterEqual(result.energy, 0.0)

    def test_certain_request_never_costs_more_than_reactive(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            spec = PacketSpec(bits=rng.uniform(0.5, 8.0), window=3)
            channels = rng.uniform(0.1, 4.0, size=4)
            result = run_offline_episode(spec, channels, [1.0, 1.0, 1.0], 1)
            self.assertLessEqual(result.energy, reactive_energy(spec.bits, channels[-1], 1) + 1e-9)

    def test_length_checks(self):
        spec = PacketSpec(bits=2.0, window=2)
        with self.assertRaises(ContractError):
            run_offline_episode(spec, [1.0, 1.0], [0.5, 0.5], 1)
        with self.assertRaises(ContractError):
            run_offline_episode(spec, [1.0, 1.0, 1.0], [0.5], 1)
