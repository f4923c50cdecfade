import json
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np

from wgpulse.config import read_config_set
from wgpulse.settings import SETTINGS
from wgpulse.verify import (REPORT_NAME, cross_engine_tolerance, factor_two_checks, flux_checks,
                            scenario_checks, scenario_name, verify)

SMALL_SUITE = Path(__file__).parent / "resources" / "config" / "verify_suite_small.yaml"


def flipped_drive(f, s, couplings):
    return 2 * couplings * np.real(np.conj(f) * s)


def by_scenario(checks):
    return {c['scenario']: c for c in checks}


class TestVerifyHelpers(unittest.TestCase):

    def test_cross_engine_tolerance(self):
        base = SETTINGS.VERIFY.cross_engine_tolerance
        self.assertEqual(cross_engine_tolerance(0.005), base)
        self.assertEqual(cross_engine_tolerance(0.001), base)
        self.assertAlmostEqual(cross_engine_tolerance(0.01), 2 * base)

    def test_scenario_name(self):
        resolved = {'emitter': {'kind': 'symmetric'}, 'pulse': {'shape': 'rect', 'gamma_tp': 2.0, 'photons': 2}}
        self.assertEqual(scenario_name(resolved), 'symmetric-n2-rect-tp2')
        resolved['pulse'] = {'shape': 'sampled', 'photons': 1}
        self.assertEqual(scenario_name(resolved), 'symmetric-n1-sampled-sampled')

    def test_bundled_suite(self):
        configs = read_config_set(SETTINGS.VERIFY.suite)
        self.assertEqual(len(configs), 8)
        for config in configs:
            self.assertEqual(config['grid']['gamma_dt'], SETTINGS.VERIFY.gamma_dt)


class TestChecks(unittest.TestCase):

    def setUp(self):
        self.config = read_config_set(SMALL_SUITE)[0]

    def test_scenario_checks(self):
        checks = scenario_checks(self.config)
        self.assertEqual([c['name'] for c in checks], ['conservation', 'conservation', 'cross_engine_population'])
        self.assertEqual(checks[0]['scenario'], 'chiral-n1-rect-tp2/analytic')
        self.assertTrue(all(c['passed'] for c in checks))
        self.assertLess(checks[0]['value'], 1e-6)

    def test_identities(self):
        checks = factor_two_checks(0.01) + flux_checks(0.01)
        self.assertTrue(all(c['passed'] for c in checks), checks)
        self.assertEqual(by_scenario(checks[:2]).keys(), {'analytic', 'mps'})

    def test_mutated_population_equation_is_caught(self):
        with mock.patch('wgpulse.analytic._population_drive', flipped_drive):
            factor_two = by_scenario(factor_two_checks(0.01))
            self.config['engines'] = {'analytic': True, 'mps': False}
            conservation = scenario_checks(self.config)
        self.assertFalse(factor_two['analytic']['passed'])
        # the time-bin engine does not use the population equation
        self.assertTrue(factor_two['mps']['passed'])
        self.assertEqual(len(conservation), 1)
        self.assertFalse(conservation[0]['passed'])


class TestVerify(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.report = verify(SMALL_SUITE, out=cls.tmp.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_passes(self):
        failed = [c for c in self.report['checks'] if not c['passed']]
        self.assertEqual(failed, [])
        self.assertTrue(self.report['passed'])
        self.assertEqual(self.report['n_failed'], 0)

    def test_all_checks_present(self):
        names = {c['name'] for c in self.report['checks']}
        self.assertEqual(names, {'conservation', 'cross_engine_population', 'factor_two', 'flux_closed_form',
                                 'flux_integral', 'g1_diagonal', 'cross_engine_g1', 'stationary_identity',
                                 'intensity_identity', 'spectrum_nonnegative', 'spectrum_negative_without_c4',
                                 'symmetric_dip', 'convergence_order'})
        convergence = [c for c in self.report['checks'] if c['name'] == 'convergence_order'][0]
        coarse, fine = convergence['errors']
        self.assertGreater(coarse, fine)

    def test_report_file(self):
        with open(Path(self.tmp.name) / REPORT_NAME, 'r') as f:
            written = json.load(f)
        self.assertEqual(written['n_checks'], len(written['checks']))
        self.assertEqual(written['gamma_dt'], SETTINGS.VERIFY.gamma_dt)
        self.assertIn('numpy', written['versions'])
        self.assertEqual(written['suite'], str(SMALL_SUITE))
        for row in written['checks']:
            self.assertEqual(set(row) - {'errors'}, {'name', 'scenario', 'value', 'lower', 'upper', 'passed'})

    def test_failure_is_reported(self):
        with tempfile.TemporaryDirectory() as tmp, \
                mock.patch('wgpulse.analytic._population_drive', flipped_drive):
            report = verify(SMALL_SUITE, out=tmp)
        self.assertFalse(report['passed'])
        failed = {(c['name'], c['scenario']) for c in report['checks'] if not c['passed']}
        self.assertIn(('factor_two', 'analytic'), failed)
        self.assertIn(('conservation', 'chiral-n1-rect-tp2/analytic'), failed)


if __name__ == '__main__':
    unittest.main()
