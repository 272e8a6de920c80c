import numpy as np
from django.test import SimpleTestCase, tag

from intersection.analysis_service import solve
from intersection.capacity_service import build_saturated_chain, capacity
from intersection.default_scenarios import example_one
from intersection.exceptions import AnalysisError, InstabilityError
from intersection.kernel import service_matrix
from intersection.numerics import open_phase_winding, phase_winding, richardson_limit
from intersection.queue_service import (
    arbitrary_epoch_pgf, batch_pgf, build_A_matrices, find_unit_disk_roots, mean_queue_length, queue_pgf, queue_pmf,
    solve_empty_probs,
)
from intersection.scenario import BatchSizeLaw, parse_config
from intersection.simulation_service import SimOptions, simulate_queue

# enough inversion points for the aliasing bound at n_max <= 200
SAMPLES = 4096

# No major traffic and a 2 s merge: an M/D/1 queue with rho = 0.25 /s * 2 s = 0.5
SCALAR_DOC = """
major: {flow_veh_per_hour: 0}
minor: {batch_rate_per_hour: 900}
gaps_per_attempt: 1
profiles:
  - probability: 1.0
    merge_time_s: 2
    gaps:
      explicit:
        u: [[5]]
        p: [[1]]
"""


def at_load(config, load):
    """``config`` with the minor-road demand set to ``load`` times its capacity."""
    cap = capacity(config).capacity
    return config.with_overrides(batch_flow=load * cap / config.batch_size.mean)


def small_config(load=0.5, batch_size=None):
    # 3 attempts x 2 gaps x 2 profiles = 12 customer types
    config = example_one(attempts=3, tail='saturating')
    if batch_size is not None:
        config = config.with_overrides(batch_size=batch_size)
    return at_load(config, load)


class NumericsTests(SimpleTestCase):

    def test_richardson_removes_leading_error(self):
        # f(h) = 2 + 3 h + 5 h^2 sampled at h = 1, 1/2, 1/4, ...
        values = [2.0 + 3.0 * h + 5.0 * h * h for h in 0.5 ** np.arange(4)]
        self.assertAlmostEqual(richardson_limit(2.0, values), 2.0, places=12)

    def test_phase_winding_counts_turns(self):
        theta = np.linspace(0.0, 2.0 * np.pi, 400, endpoint=False)
        self.assertAlmostEqual(phase_winding(np.exp(3j * theta)), 3.0, places=10)
        self.assertAlmostEqual(phase_winding(np.exp(-1j * theta)), -1.0, places=10)
        half = np.linspace(0.0, np.pi, 201)
        self.assertAlmostEqual(open_phase_winding(np.exp(2j * half)), 1.0, places=10)


class BatchPgfTests(SimpleTestCase):

    def test_laws(self):
        self.assertEqual(batch_pgf(BatchSizeLaw.deterministic(2), 0.5), 0.25)
        self.assertLess(abs(batch_pgf(BatchSizeLaw.geometric(0.5), 0.5) - 1.0 / 3.0), 1e-15)
        self.assertLess(abs(batch_pgf(BatchSizeLaw.explicit([0.5, 0.5]), 1j) - (0.5j - 0.5)), 1e-15)

    def test_one_at_one(self):
        for law in (BatchSizeLaw.deterministic(3), BatchSizeLaw.geometric(0.3), BatchSizeLaw.explicit([0.2, 0.8])):
            self.assertLess(abs(batch_pgf(law, 1.0) - 1.0), 1e-14)


class TransitionMatrixTests(SimpleTestCase):

    def test_stochastic_at_one(self):
        config = small_config()
        a, a_star = build_A_matrices(config, 1.0)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-13)
        np.testing.assert_allclose(a_star.sum(axis=1), 1.0, atol=1e-13)

    def test_raw_matrices_lose_no_mass_with_saturating_tail(self):
        config = small_config()
        a, _ = build_A_matrices(config, 1.0, renormalize=False)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)

    def test_equals_saturated_kernel_at_one(self):
        config = small_config()
        a, _ = build_A_matrices(config, 1.0, renormalize=False)
        np.testing.assert_allclose(a.real, build_saturated_chain(config).raw_kernel, atol=1e-14)
        self.assertLess(np.abs(a.imag).max(), 1e-14)

    def test_slow_arrivals_see_no_lag(self):
        # at lambda = 1e-6 /s the lag has always expired before the next driver arrives
        config = example_one(attempts=3, tail='saturating', batch_flow=0.0036)
        _, a_star = build_A_matrices(config, 0.5, renormalize=False)
        s = config.batch_rate * 0.5
        np.testing.assert_allclose(a_star, service_matrix(config, s, np.zeros(config.n_types)), atol=1e-4)

    def test_no_minor_traffic(self):
        with self.assertRaises(AnalysisError):
            build_A_matrices(example_one(attempts=3, tail='saturating', batch_flow=0.0), 0.5)


class RootTests(SimpleTestCase):

    def test_contour_count_and_roots(self):
        config = small_config()
        roots = find_unit_disk_roots(config)
        self.assertEqual(roots.contour_count, 11)
        self.assertEqual(roots.total, 12)
        self.assertIn(1.0 + 0j, roots.roots)
        self.assertTrue(all(abs(z) < 1.0 for z in roots.roots if z != 1))

    def test_roots_are_determinant_zeros(self):
        config = small_config()
        for z in find_unit_disk_roots(config).roots:
            if z == 0:
                continue
            a, _ = build_A_matrices(config, z)
            sv = np.linalg.svd(z * np.eye(config.n_types) - a, compute_uv=False)
            self.assertLess(sv[-1], 1e-7 * sv[0], msg=f"z={z}")

    def test_large_zero_cluster(self):
        # 40 types; A(0) has a null space of dimension well above 32
        config = at_load(example_one(attempts=10, tail='saturating'), 0.5)
        roots = find_unit_disk_roots(config)
        self.assertEqual(roots.total, config.n_types)
        self.assertEqual(roots.roots[0], 0j)
        self.assertGreater(roots.zero_null_dim, 32)
        self.assertGreater(roots.multiplicities[0], 32)
        self.assertLessEqual(roots.multiplicities[0], roots.zero_null_dim)

    def test_unstable_queue(self):
        with self.assertRaises(InstabilityError):
            find_unit_disk_roots(small_config(load=1.1))


class EmptyQueueTests(SimpleTestCase):

    def test_f0_is_a_subprobability(self):
        f0 = solve_empty_probs(small_config())
        self.assertEqual(f0.shape, (12,))
        self.assertTrue(np.all(f0 >= 0.0))
        self.assertTrue(0.0 < f0.sum() < 1.0)
        self.assertFalse(f0.flags.writeable)

    def test_f0_bounded_by_type_probabilities(self):
        artifacts = solve(small_config())
        law = artifacts.service_law
        self.assertTrue(np.all(artifacts.empty_probs <= law.source_probs + 1e-10))

    def test_lighter_load_empties_more_often(self):
        light = solve_empty_probs(small_config(load=0.3)).sum()
        heavy = solve_empty_probs(small_config(load=0.7)).sum()
        self.assertGreater(light, heavy)


class ScalarQueueTests(SimpleTestCase):
    """A single customer type reduces to the M/D/1 queue."""

    def setUp(self):
        self.config = parse_config(SCALAR_DOC)

    def test_only_root_is_one(self):
        roots = find_unit_disk_roots(self.config)
        self.assertEqual(roots.contour_count, 0)
        self.assertEqual(roots.roots, (1.0 + 0j,))

    def test_empty_probability(self):
        np.testing.assert_allclose(solve_empty_probs(self.config), [0.5], atol=1e-8)

    def test_mean_is_pollaczek_khinchine(self):
        # rho + rho^2 / (2 (1 - rho)) for deterministic service
        self.assertAlmostEqual(mean_queue_length(self.config), 0.75, delta=1e-6)

    def test_first_probabilities(self):
        pmf = queue_pmf(self.config, 20, samples=SAMPLES)
        np.testing.assert_allclose(pmf[:2], [0.5, 0.5 * (np.exp(0.5) - 1.0)], atol=1e-8)


class LightTrafficTests(SimpleTestCase):

    def test_departures_almost_always_leave_an_empty_queue(self):
        config = example_one(attempts=3, tail='saturating', batch_flow=0.0036)
        self.assertGreaterEqual(solve_empty_probs(config).sum(), 1.0 - 1e-3)


class QueuePgfTests(SimpleTestCase):

    def test_normalized_at_one(self):
        config = small_config()
        self.assertEqual(queue_pgf(config, 1.0), 1.0)
        self.assertLess(abs(queue_pgf(config, 1.0 - 1e-7) - 1.0), 1e-5)

    def test_value_at_zero_is_empty_probability(self):
        config = small_config()
        self.assertAlmostEqual(queue_pgf(config, 0.0).real, solve_empty_probs(config).sum(), places=12)

    def test_single_vehicles_see_the_same_queue(self):
        config = small_config()
        for z in (0.3, -0.5 + 0.2j, 0.8j):
            self.assertLess(abs(arbitrary_epoch_pgf(config, z) - queue_pgf(config, z)), 1e-12)

    def test_arrivals_per_service_with_solved_f0(self):
        config = small_config(batch_size=BatchSizeLaw.geometric(0.6))
        law = solve(config).service_law
        expected = config.batch_rate * config.batch_size.mean * law.mean
        self.assertAlmostEqual(law.arrivals_per_service(), expected, delta=1e-8)


class QueuePmfTests(SimpleTestCase):

    def test_departure_pmf(self):
        config = small_config()
        pmf = queue_pmf(config, 200, samples=SAMPLES)
        self.assertEqual(pmf.shape, (201,))
        self.assertTrue(np.all(pmf >= -1e-10))
        self.assertGreaterEqual(pmf.sum(), 1.0 - 1e-6)
        self.assertLessEqual(pmf.sum(), 1.0 + 1e-8)
        self.assertAlmostEqual(pmf[0], solve_empty_probs(config).sum(), places=8)

    def test_mean_matches_pmf(self):
        config = small_config()
        pmf = queue_pmf(config, 200, samples=SAMPLES)
        self.assertAlmostEqual(mean_queue_length(config), np.arange(pmf.size) @ pmf, delta=1e-6)

    def test_batches_change_the_arbitrary_epoch(self):
        config = small_config(batch_size=BatchSizeLaw.explicit([0.5, 0.3, 0.2]))
        departure = queue_pmf(config, 150, epoch='departure', samples=SAMPLES)
        arbitrary = queue_pmf(config, 150, epoch='arbitrary', samples=SAMPLES)
        self.assertGreaterEqual(arbitrary.sum(), 1.0 - 1e-6)
        self.assertGreater(np.abs(departure - arbitrary).sum(), 1e-4)
        self.assertAlmostEqual(mean_queue_length(config, epoch='arbitrary'),
                               np.arange(arbitrary.size) @ arbitrary, delta=1e-6)

    def test_deterministic_single_vehicles_same_at_both_epochs(self):
        config = small_config()
        arbitrary = queue_pmf(config, 60, epoch='arbitrary', samples=SAMPLES)
        np.testing.assert_allclose(arbitrary, queue_pmf(config, 60, samples=SAMPLES), atol=1e-9)

    def test_bad_arguments(self):
        with self.assertRaises(ValueError):
            queue_pmf(small_config(), 10, epoch='random')
        with self.assertRaises(ValueError):
            queue_pmf(small_config(), -1)


@tag('slow')
class SimulatedQueueTests(SimpleTestCase):
    """Analytic queue law against a million simulated departures at half load."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = at_load(example_one(attempts=25, tail='saturating'), 0.5)
        cls.simulated = simulate_queue(cls.config, SimOptions(mode='open', seed=7, replications=4,
                                                              warmup=10_000, horizon=260_000))

    def test_departure_pmf_total_variation(self):
        pmf = queue_pmf(self.config, 400)
        sim = self.simulated.departure_pmf.point
        width = max(pmf.size, sim.size)
        distance = 0.5 * np.abs(np.pad(pmf, (0, width - pmf.size)) - np.pad(sim, (0, width - sim.size))).sum()
        self.assertLessEqual(distance, 0.02)

    def test_empty_probabilities_within_three_standard_errors(self):
        f0 = solve_empty_probs(self.config)
        est = self.simulated.empty_frequencies
        seen = est.point > 0
        deviation = np.abs(f0[seen] - est.point[seen])
        self.assertTrue(np.all(deviation <= 3.0 * est.std_error[seen] + 1e-4))

    def test_mean_queue_within_three_standard_errors(self):
        est = self.simulated.mean_queue
        self.assertLessEqual(abs(mean_queue_length(self.config) - est.point), 3.0 * est.std_error)

    def test_mean_service_time(self):
        est = self.simulated.mean_service
        self.assertLessEqual(abs(solve(self.config).service_law.mean - est.point), 3.0 * est.std_error)
