import math

import numpy as np
from django.test import SimpleTestCase, tag

from intersection.capacity_service import capacity
from intersection.default_scenarios import example_one, example_two
from intersection.scenario import parse_config
from intersection.simulation_service import (
    GapAcceptanceServer, ScriptedMajorRoad, SimOptions, _time_average_pmf, estimate, rng_streams,
    simulate_capacity, simulate_queue, simulate_saturated,
)

# Every driver needs 5 s and merges in 2 s; the second attempt repeats the first.
SCRIPTED_DOC = """
major: {flow_veh_per_hour: 0}
minor: {batch_rate_per_hour: 0}
gaps_per_attempt: 1
tail: saturating
profiles:
  - probability: 1.0
    merge_time_s: 2
    gaps:
      explicit:
        u: [[5], [5]]
        p: [[1], [1]]
"""

SHORT_RUN = SimOptions(seed=11, replications=2, warmup=200, horizon=20_000)


def _run_scripted(major_times, drivers):
    config = parse_config(SCRIPTED_DOC)
    server = GapAcceptanceServer(config, ScriptedMajorRoad(major_times), rng_streams(1, 0))
    clock, records = 0.0, []
    for _ in range(drivers):
        record = server.serve(clock)
        records.append(record)
        clock = record.departure
    return records


class ScriptedServerTests(SimpleTestCase):

    def test_one_long_gap_serves_a_platoon(self):
        records = _run_scripted([3.0, 20.0], 8)
        self.assertEqual([r.departure for r in records], [5.0, 7.0, 9.0, 11.0, 13.0, 15.0, 17.0, 22.0])
        self.assertEqual([r.attempt for r in records], [1, 0, 0, 0, 0, 0, 0, 1])
        self.assertEqual([r.first_accepted for r in records], [False] + [True] * 6 + [False])

    def test_gap_equal_to_critical_gap_is_accepted(self):
        # at t = 15 the next vehicle is exactly 5 s away
        record = _run_scripted([3.0, 20.0], 7)[6]
        self.assertEqual(record.start, 15.0)
        self.assertTrue(record.first_accepted)
        self.assertEqual(record.departure, 17.0)


class TimeAverageTests(SimpleTestCase):

    def test_hand_case(self):
        # empty on [0, 1), two vehicles on [1, 2), one on [2, 4)
        pmf = _time_average_pmf(np.array([1.0]), np.array([2]), np.array([2.0, 5.0]), 0.0, 4.0)
        np.testing.assert_allclose(pmf, [0.25, 0.5, 0.25])

    def test_level_carried_into_the_window(self):
        pmf = _time_average_pmf(np.array([0.0]), np.array([1]), np.array([3.0]), 1.0, 5.0)
        np.testing.assert_allclose(pmf, [0.5, 0.5])


class EstimateTests(SimpleTestCase):

    def test_two_replications(self):
        result = estimate([1.0, 3.0])
        self.assertEqual(result.point, 2.0)
        self.assertAlmostEqual(result.std_error, 1.0)
        self.assertAlmostEqual(result.ci_half_width, 1.96)
        self.assertEqual(result.replications, 2)

    def test_single_replication_has_no_error(self):
        result = estimate([2.5])
        self.assertEqual(result.point, 2.5)
        self.assertTrue(math.isnan(result.std_error))

    def test_arrays(self):
        result = estimate([[0.5, 0.5], [0.7, 0.3]])
        np.testing.assert_allclose(result.point, [0.6, 0.4])
        self.assertEqual(result.std_error.shape, (2,))


class SimOptionsTests(SimpleTestCase):

    def test_defaults_come_from_settings(self):
        options = SimOptions().resolved()
        self.assertEqual((options.seed, options.warmup, options.horizon, options.replications),
                         (20240917, 10_000, 1_000_000, 10))

    def test_invalid_options(self):
        for options in (SimOptions(mode='closed'), SimOptions(reuse='some'), SimOptions(warmup=10, horizon=10),
                        SimOptions(replications=0)):
            with self.subTest(options=options), self.assertRaises(ValueError):
                options.resolved()

    def test_mode_must_match(self):
        with self.assertRaises(ValueError):
            simulate_capacity(example_one(attempts=5), SimOptions(mode='open'))
        with self.assertRaises(ValueError):
            simulate_queue(example_one(attempts=5), SimOptions(mode='saturated'))


class SaturatedSimulationTests(SimpleTestCase):

    def test_same_seed_same_result(self):
        config = example_one(attempts=10)
        first = simulate_capacity(config, SHORT_RUN)
        again = simulate_capacity(config, SHORT_RUN)
        other = simulate_capacity(config, SimOptions(seed=12, replications=2, warmup=200, horizon=20_000))
        np.testing.assert_array_equal(first.values, again.values)
        self.assertNotEqual(first.point, other.point)

    def test_empty_major_road(self):
        result = simulate_capacity(example_one(attempts=10, major_flow=0.0), SHORT_RUN)
        self.assertAlmostEqual(result.point, 3600.0 / 4.1, delta=3.0)
        self.assertAlmostEqual(result.type_frequencies.sum(), 1.0, places=12)

    def test_saturated_estimates(self):
        config = example_one(attempts=10)
        result = simulate_saturated(config, SHORT_RUN)
        self.assertEqual(result['type_frequencies'].point.shape, (config.n_types,))
        success = result['first_attempt_success'].point
        self.assertEqual(success.shape, (2, 2))
        self.assertTrue(np.all((success >= 0.0) & (success <= 1.0)))
        # mean service and capacity describe the same departures
        self.assertAlmostEqual(3600.0 / result['mean_service'].point, result['capacity'].point,
                               delta=0.01 * result['capacity'].point)


class OpenSimulationTests(SimpleTestCase):

    def test_open_queue(self):
        config = example_one(attempts=10, tail='saturating', batch_flow=150.0)
        result = simulate_queue(config, SimOptions(mode='open', seed=3, replications=2, warmup=200,
                                                   horizon=20_000))
        self.assertAlmostEqual(result.departure_pmf.point.sum(), 1.0, places=12)
        self.assertAlmostEqual(result.arbitrary_pmf.point.sum(), 1.0, places=12)
        self.assertAlmostEqual(result.type_frequencies.point.sum(), 1.0, places=12)
        self.assertAlmostEqual(result.empty_frequencies.point.sum(), result.departure_pmf.point[0], places=12)

    def test_needs_minor_traffic(self):
        with self.assertRaises(ValueError):
            simulate_queue(example_one(attempts=5, batch_flow=0.0), SimOptions(mode='open'))


@tag('slow')
class CapacityAgreementTests(SimpleTestCase):
    """Long runs against the analytic capacities."""

    FLOWS = (250.0, 500.0, 750.0, 1000.0)
    OPTIONS = SimOptions(seed=5, replications=4, warmup=10_000, horizon=250_000)

    def test_first_example_is_exact(self):
        config = example_one()
        for q in self.FLOWS:
            at_q = config.with_overrides(major_flow=q)
            analytic = capacity(at_q).capacity
            simulated = simulate_capacity(at_q, self.OPTIONS)
            with self.subTest(q=q):
                self.assertLess(abs(analytic - simulated.point) / simulated.point, 0.005)

    def test_second_example_is_a_lower_bound(self):
        config = example_two()
        for q in self.FLOWS:
            at_q = config.with_overrides(major_flow=q)
            analytic = capacity(at_q).capacity
            simulated = simulate_capacity(at_q, self.OPTIONS)
            with self.subTest(q=q):
                self.assertLessEqual(analytic, simulated.point + simulated.ci_half_width)
                self.assertLess(abs(analytic - simulated.point) / simulated.point, 0.005)

    def test_limited_reuse_reproduces_the_analysis(self):
        config = example_two(major_flow=750.0)
        analytic = capacity(config).capacity
        options = SimOptions(seed=5, reuse='limited', replications=4, warmup=10_000, horizon=250_000)
        simulated = simulate_capacity(config, options)
        self.assertLessEqual(abs(analytic - simulated.point), max(4.0 * simulated.std_error, 0.002 * analytic))
