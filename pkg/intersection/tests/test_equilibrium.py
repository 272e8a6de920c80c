import numpy as np
from django.test import SimpleTestCase

from intersection.capacity_service import capacity
from intersection.default_scenarios import example_one, example_two
from intersection.equilibrium_service import (
    ServiceLaw, arrivals_per_service_mean, attempt_success_probs, empty_ratio, mean_service_time,
    service_lst, service_lst_given_pred, solve_first_attempt_probs, stability_margin,
)
from intersection.exceptions import EmptyProbabilityError
from intersection.scenario import BatchSizeLaw, TypeIndex


class FirstAttemptTests(SimpleTestCase):

    def test_empty_major_road_always_accepts(self):
        config = example_one(attempts=5, major_flow=0.0)
        np.testing.assert_array_equal(solve_first_attempt_probs(config, np.zeros(config.n_types)),
                                      np.ones((2, 2)))

    def test_probabilities_lie_in_unit_interval(self):
        for config in (example_one(attempts=20), example_two(attempts=5, major_flow=1000.0)):
            first = solve_first_attempt_probs(config, np.zeros(config.n_types))
            self.assertEqual(first.shape, (2, 2))
            self.assertTrue(np.all((first >= 0.0) & (first <= 1.0)))

    def test_lag_helps_the_first_attempt(self):
        # with a lag, the first gap is accepted more often than e^{-q u}
        config = example_one(attempts=20)
        first = solve_first_attempt_probs(config, np.zeros(config.n_types))
        fresh = np.exp(-config.major_rate * config.gap_values[0])
        self.assertTrue(np.all(first > fresh))


class AttemptProbabilityTests(SimpleTestCase):

    def test_served_probabilities_telescope(self):
        config = example_one(attempts=20)
        probs = attempt_success_probs(config, solve_first_attempt_probs(config, np.zeros(config.n_types)))
        fail = 1.0 - (config.gap_probs * probs.success).sum(axis=1)
        served = (config.gap_probs * probs.served).sum(axis=(0, 1))
        np.testing.assert_allclose(served + np.prod(fail, axis=0), 1.0, atol=1e-12)

    def test_saturating_tail_serves_everyone(self):
        config = example_two(attempts=4, major_flow=750.0)
        law = ServiceLaw(config)
        self.assertAlmostEqual(law.source_probs.sum(), 1.0, places=12)

    def test_type_probability_lookup(self):
        config = example_one(attempts=10)
        probs = ServiceLaw(config).attempt_probs
        t = TypeIndex(2, 1, 2)
        self.assertEqual(probs.type_probability(t), probs.type_probs[1, 0, 1])


class SaturatedServiceLawTests(SimpleTestCase):

    def test_mean_equals_saturated_chain(self):
        for config in (example_one(), example_two(major_flow=750.0)):
            law = ServiceLaw(config)
            self.assertLess(abs(law.mean - capacity(config).g), 1e-10)

    def test_transform_at_zero_is_one(self):
        config = example_two(attempts=4)
        self.assertLess(abs(service_lst(config, 0.0, saturated=True) - 1.0), 1e-12)
        value = service_lst(config, 0.1 + 0.2j, saturated=True)
        self.assertLess(abs(value), 1.0)

    def test_mean_service_helper(self):
        config = example_one(attempts=30)
        self.assertAlmostEqual(mean_service_time(config, saturated=True), ServiceLaw(config).mean, places=12)

    def test_arrivals_per_service(self):
        for law in (BatchSizeLaw.deterministic(1), BatchSizeLaw.geometric(0.5), BatchSizeLaw.explicit([0.2, 0.3, 0.5])):
            config = example_one(attempts=30).with_overrides(batch_flow=150.0, batch_size=law)
            with self.subTest(kind=law.kind):
                expected = config.batch_rate * law.mean * mean_service_time(config, saturated=True)
                self.assertAlmostEqual(arrivals_per_service_mean(config, saturated=True), expected, delta=1e-8)

    def test_given_pred_sums_to_row_mass(self):
        config = example_one()
        law = ServiceLaw(config)
        source = TypeIndex(1, 2, 2)
        total = sum(service_lst_given_pred(config, source, target, 0.0, law.attempt_probs, law.f0)
                    for target in config.type_indices())
        self.assertAlmostEqual(total.real, 1.0, delta=1e-6)

    def test_mean_given_source_is_positive(self):
        law = ServiceLaw(example_one(attempts=20))
        means = law.mean_given_source()
        self.assertTrue(np.all(means[law.reachable] >= 4.0))


class EmptyRatioTests(SimpleTestCase):

    def test_ratio(self):
        np.testing.assert_allclose(empty_ratio(np.array([0.1, 0.0]), np.array([0.2, 0.0])), [0.5, 0.0])

    def test_inconsistent_f0(self):
        with self.assertRaises(EmptyProbabilityError):
            empty_ratio(np.array([0.3, 0.0]), np.array([0.2, 0.5]))


class StabilityTests(SimpleTestCase):

    def test_margin_uses_capacity(self):
        # 400 veh/h against a capacity of 466.4 veh/h
        margin = stability_margin(example_two(alpha=1.0, major_flow=500.0, batch_flow=400.0))
        self.assertTrue(margin.stable)
        self.assertAlmostEqual(margin.rho, 400.0 / 466.4, delta=5e-4)

    def test_overload(self):
        config = example_one(attempts=30)
        demand = 1.2 * capacity(config).capacity
        margin = stability_margin(config.with_overrides(batch_flow=demand))
        self.assertFalse(margin.stable)
        self.assertAlmostEqual(margin.rho, 1.2, places=10)

    def test_no_minor_traffic(self):
        margin = stability_margin(example_one(attempts=5, batch_flow=0.0))
        self.assertEqual(margin.rho, 0.0)
        self.assertTrue(margin.stable)
