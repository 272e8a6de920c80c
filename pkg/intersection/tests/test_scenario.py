import itertools
import os

import numpy as np
import yaml
from django.test import SimpleTestCase

from intersection.default_scenarios import example_document, example_one, example_two
from intersection.exceptions import ScenarioError
from intersection.scenario import (
    BatchSizeLaw, TypeIndex, check_limited_reuse, flatten, generate_impatience_table, parse_config,
    serialize_config, unflatten,
)

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'scenarios')

EXPLICIT_DOC = """
major: {flow_veh_per_hour: 400}
minor:
  batch_rate_per_hour: 100
  batch_size: {kind: explicit, params: {pmf: [0.5, 0.5]}}
gaps_per_attempt: 1
profiles:
  - probability: 1.0
    merge_time_s: 2
    gaps:
      explicit:
        u: [[5], [4], [3]]
        p: [[1], [1], [1]]
"""


def _document(**changes):
    doc = example_document()
    for path, value in changes.items():
        target = doc
        keys = path.split('.')
        for key in keys[:-1]:
            target = target[int(key)] if isinstance(target, list) else target[key]
        target[keys[-1]] = value
    return yaml.safe_dump(doc)


class TypeIndexTests(SimpleTestCase):

    def test_flatten_matches_formula(self):
        self.assertEqual(flatten(TypeIndex(2, 1, 2), 3, 2, 2), 6)
        self.assertEqual(flatten(TypeIndex(1, 1, 1), 3, 2, 2), 1)
        self.assertEqual(flatten(TypeIndex(3, 2, 2), 3, 2, 2), 12)

    def test_unflatten_inverts_flatten(self):
        for i, k, r in itertools.product(range(1, 4), range(1, 3), range(1, 3)):
            t = TypeIndex(i, k, r)
            self.assertEqual(unflatten(flatten(t, 3, 2, 2), 3, 2, 2), t)

    def test_out_of_range(self):
        with self.assertRaises(IndexError):
            flatten(TypeIndex(4, 1, 1), 3, 2, 2)
        with self.assertRaises(IndexError):
            unflatten(13, 3, 2, 2)

    def test_config_type_order(self):
        config = example_one(attempts=3)
        self.assertEqual(config.n_types, 12)
        self.assertEqual([config.flatten(t) for t in config.type_indices()], list(range(1, 13)))


class BatchSizeLawTests(SimpleTestCase):

    def test_explicit_pgf(self):
        law = BatchSizeLaw.explicit([0.5, 0.5])
        self.assertAlmostEqual(law.pgf(0.5), 0.375, places=14)
        self.assertAlmostEqual(law.mean, 1.5, places=14)
        self.assertAlmostEqual(law.pgf_derivative(1.0), 1.5, places=14)

    def test_geometric(self):
        law = BatchSizeLaw.geometric(0.25)
        self.assertAlmostEqual(law.mean, 4.0)
        self.assertAlmostEqual(law.pgf(1.0), 1.0)
        self.assertAlmostEqual(law.pgf_derivative(1.0), 4.0)
        self.assertAlmostEqual(law.probability(2), 0.1875)

    def test_deterministic(self):
        law = BatchSizeLaw.deterministic(3)
        self.assertEqual(law.probability(3), 1.0)
        self.assertEqual(law.probability(2), 0.0)
        self.assertAlmostEqual(law.pgf(0.5), 0.125)


class ImpatienceTableTests(SimpleTestCase):

    def test_rows_shrink_towards_merge_time(self):
        table = generate_impatience_table((5.0, 6.0), (0.4, 0.6), alpha=0.9, merge_time=4.0, attempts=3)
        np.testing.assert_allclose(table.u, [(5.0, 6.0), (4.9, 5.8), (4.81, 5.62)], atol=1e-12)
        self.assertEqual(table.p, ((0.4, 0.6),) * 3)

    def test_alpha_one_repeats_first_row(self):
        table = generate_impatience_table((10.0, 12.0), (0.5, 0.5), alpha=1.0, merge_time=5.0, attempts=4)
        self.assertEqual(set(table.u), {(10.0, 12.0)})

    def test_rejects_bad_alpha(self):
        with self.assertRaises(ScenarioError):
            generate_impatience_table((5.0,), (1.0,), alpha=0.0, merge_time=4.0, attempts=2)


class ParseConfigTests(SimpleTestCase):

    def test_example_documents_parse(self):
        for name, tail in (('example1.yaml', 'truncated'), ('example2.yaml', 'saturating')):
            with open(os.path.join(SCENARIO_DIR, name), encoding='utf-8') as handle:
                config = parse_config(handle.read(), default_attempts=10)
            self.assertEqual(config.tail, tail)
            self.assertEqual((config.n_profiles, config.attempts, config.gaps_per_attempt), (2, 10, 2))
            self.assertAlmostEqual(config.major_rate, 500.0 / 3600.0)

    def test_attempts_resolution(self):
        self.assertEqual(parse_config(_document(), default_attempts=7).attempts, 7)
        self.assertEqual(parse_config(_document(attempts=4), default_attempts=7).attempts, 4)
        self.assertEqual(parse_config(_document(attempts=4), attempts=9).attempts, 9)
        self.assertEqual(parse_config(EXPLICIT_DOC).attempts, 3)

    def test_explicit_tables_can_only_be_shortened(self):
        config = parse_config(EXPLICIT_DOC, attempts=2)
        self.assertEqual(config.profiles[0].gaps.u, ((5.0,), (4.0,)))
        with self.assertRaises(ScenarioError):
            parse_config(EXPLICIT_DOC, attempts=5)

    def test_errors_carry_key_paths(self):
        with self.assertRaises(ScenarioError) as cm:
            parse_config(_document(**{'profiles.1.gaps.generator.alpha': 1.5}))
        self.assertIn('profiles[1].gaps.generator.alpha: alpha must lie in (0, 1]', cm.exception.messages)

    def test_collects_several_errors(self):
        text = _document(**{'profiles.0.merge_time_s': -1, 'major.flow_veh_per_hour': 'fast', 'colour': 'red'})
        with self.assertRaises(ScenarioError) as cm:
            parse_config(text)
        messages = '\n'.join(cm.exception.messages)
        self.assertIn('profiles[0].merge_time_s:', messages)
        self.assertIn('major.flow_veh_per_hour:', messages)
        self.assertIn("unknown key 'colour'", messages)

    def test_profile_probabilities_must_sum_to_one(self):
        with self.assertRaises(ScenarioError) as cm:
            parse_config(_document(**{'profiles.1.probability': 0.2}))
        self.assertTrue(any(m.startswith('profiles: profile probabilities sum') for m in cm.exception.messages))

    def test_gap_not_above_merge_time(self):
        with self.assertRaises(ScenarioError) as cm:
            parse_config(_document(**{'profiles.0.gaps.generator.base_gaps_s': [4, 6]}))
        self.assertTrue(any(m.startswith('profiles[0].gaps.generator.base_gaps_s:') for m in cm.exception.messages))

    def test_saturating_tail_needs_two_attempts(self):
        with self.assertRaises(ScenarioError):
            parse_config(_document(tail='saturating'), attempts=1)
        with self.assertRaises(ScenarioError):
            example_one(attempts=3).with_overrides(tail='saturating', attempts=1)

    def test_batch_size_defaults_to_single_vehicles(self):
        doc = example_document()
        del doc['minor']['batch_size']
        config = parse_config(yaml.safe_dump(doc))
        self.assertEqual(config.batch_size, BatchSizeLaw.deterministic(1))
        self.assertEqual(config.batch_size.mean, 1.0)

    def test_not_yaml(self):
        with self.assertRaises(ScenarioError):
            parse_config('major: [unclosed')

    def test_serialize_round_trip(self):
        for config in (example_one(attempts=5), example_two(attempts=4), parse_config(EXPLICIT_DOC)):
            self.assertEqual(parse_config(serialize_config(config)), config)


class OverrideTests(SimpleTestCase):

    def test_alpha_and_merge_times_regenerate_tables(self):
        config = example_one(attempts=3).with_overrides(alpha=0.5, merge_times=(4.0, 6.0))
        np.testing.assert_allclose(config.profiles[0].gaps.u[1], (4.5, 5.0))
        np.testing.assert_allclose(config.profiles[1].gaps.u[1], (7.0, 7.5))
        np.testing.assert_allclose(config.merge_times, (4.0, 6.0))

    def test_flows(self):
        config = example_one(attempts=3).with_overrides(major_flow=900.0, batch_flow=360.0)
        self.assertAlmostEqual(config.major_rate, 0.25)
        self.assertAlmostEqual(config.batch_rate, 0.1)


class LimitedReuseTests(SimpleTestCase):

    def test_holds_for_first_example(self):
        report = check_limited_reuse(example_one(attempts=10))
        self.assertTrue(report.holds)
        self.assertEqual(report.summary(), 'condition (13): HOLDS (analysis exact)')

    def test_violated_for_second_example(self):
        report = check_limited_reuse(example_two(attempts=3))
        self.assertFalse(report.holds)
        self.assertEqual(report.summary(), 'condition (13): VIOLATED (analysis is a lower-bound approximation)')
        self.assertTrue(report.violations)
