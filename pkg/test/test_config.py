import copy
import json
import tempfile
import unittest
from pathlib import Path

import yaml

from wgpulse import config
from wgpulse.config import build_scenario, generate_configs, read_config, read_config_set, resolve_config
from wgpulse.errors import ConfigError
from wgpulse.settings import SETTINGS

RESOURCES = Path(__file__).parent / "resources" / "config"


class TestReadConfig(unittest.TestCase):

    CONFIG_CHIRAL_RECT = RESOURCES / "scenario_chiral_rect.yaml"
    CONFIG_MINIMAL = RESOURCES / "scenario_minimal.yaml"
    CONFIG_UNKNOWN_KEY = RESOURCES / "scenario_unknown_key.yaml"
    CONFIG_UNKNOWN_BLOCK = RESOURCES / "scenario_unknown_block.yaml"
    CONFIG_DUPLICATE_KEY = RESOURCES / "scenario_duplicate_key.yaml"
    CONFIG_THREE_PHOTONS = RESOURCES / "scenario_three_photons.yaml"
    CONFIG_ZERO_SAMPLES = RESOURCES / "scenario_zero_samples.yaml"
    CONFIG_DT_TOO_LARGE = RESOURCES / "scenario_dt_too_large.yaml"
    CONFIG_DETUNED_ANALYTIC = RESOURCES / "scenario_detuned_analytic.yaml"
    CONFIG_SAMPLED = RESOURCES / "scenario_sampled.yaml"

    def load_config_dict(self, path):
        with open(path, 'r') as conf:
            config_dict = config.convert_values(yaml.load(conf, Loader=yaml.FullLoader))
        return config_dict

    def test_convert_values(self):
        # YAML 1.1 leaves exponent notation without a dot as string
        raw = yaml.load("mps:\n  svd_cutoff: 1e-12\n  max_bond: 16\nemitter:\n  kind: chiral\n",
                        Loader=yaml.FullLoader)
        self.assertEqual(raw['mps']['svd_cutoff'], '1e-12')
        converted = config.convert_values(raw)
        self.assertEqual(converted['mps']['svd_cutoff'], 1e-12)
        self.assertEqual(converted['mps']['max_bond'], 16)
        self.assertEqual(converted['emitter']['kind'], 'chiral')

    def test_read_valid(self):
        config_dict = read_config(self.CONFIG_CHIRAL_RECT)
        self.assertEqual(config_dict, self.load_config_dict(self.CONFIG_CHIRAL_RECT))
        self.assertEqual(config_dict['mps']['svd_cutoff'], 1e-12)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            read_config(RESOURCES / "does_not_exist.yaml")

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as cm:
            read_config(self.CONFIG_UNKNOWN_KEY)
        self.assertIn("chirp", str(cm.exception))
        self.assertEqual(cm.exception.exit_code, 2)

    def test_unknown_block(self):
        with self.assertRaises(ConfigError):
            read_config(self.CONFIG_UNKNOWN_BLOCK)

    def test_duplicate_key(self):
        with self.assertRaises(ConfigError) as cm:
            read_config(self.CONFIG_DUPLICATE_KEY)
        self.assertIn("duplicate", str(cm.exception))

    def test_three_photons(self):
        with self.assertRaises(ConfigError):
            read_config(self.CONFIG_THREE_PHOTONS)

    def test_dt_range(self):
        with self.assertRaises(ConfigError):
            read_config(self.CONFIG_DT_TOO_LARGE)
        for dt in [0, -0.01, 'fine', True]:
            with self.assertRaises(ConfigError):
                config.validate_config({'grid': {'gamma_dt': dt}})
        config.validate_config({'grid': {'gamma_dt': SETTINGS.GRID.max_dt}})

    def test_value_checks(self):
        invalid = [
            {'emitter': {'kind': 'ring'}},
            {'pulse': {'shape': 'sech'}},
            {'pulse': {'gamma_tp': -2.0}},
            {'engines': {'analytic': 'yes'}},
            {'engines': {'analytic': False, 'mps': False}},
            {'mps': {'svd_cutoff': 1.5}},
            {'mps': {'max_bond': 1}},
            {'spectra': {'n_omega': 0}},
            {'outputs': ['population']},
        ]
        for config_dict in invalid:
            with self.subTest(config_dict=config_dict):
                with self.assertRaises(ConfigError):
                    config.validate_config(config_dict)


class TestResolveConfig(unittest.TestCase):

    def test_defaults_filled(self):
        resolved = resolve_config(read_config(TestReadConfig.CONFIG_MINIMAL))
        self.assertEqual(resolved['emitter'], {'kind': 'chiral', 'delta_over_gamma': 0.0})
        self.assertEqual(resolved['pulse'], {'shape': 'rect', 'gamma_tp': 2.0, 'photons': 1})
        self.assertEqual(resolved['grid'], {'gamma_dt': SETTINGS.GRID.gamma_dt})
        self.assertEqual(resolved['engines'], {'analytic': True, 'mps': True})
        self.assertEqual(resolved['mps']['max_bond'], SETTINGS.MPS_DEFAULT.max_bond)
        self.assertEqual(set(resolved['outputs']), set(SETTINGS.VALID_OUTPUTS_CONFIG_VALUES))
        self.assertEqual(resolved['spectra']['n_omega'], SETTINGS.SPECTRA_DEFAULT.n_omega)

    def test_resolve_is_idempotent(self):
        resolved = resolve_config(read_config(TestReadConfig.CONFIG_CHIRAL_RECT))
        self.assertEqual(resolve_config(copy.deepcopy(resolved)), resolved)

    def test_gaussian_defaults(self):
        resolved = resolve_config({'pulse': {'shape': 'gaussian', 'gamma_tp': 1.0}})
        self.assertEqual(resolved['pulse']['gamma_tc'], 3.0)

    def test_shape_specific_keys(self):
        with self.assertRaises(ConfigError):
            resolve_config({'pulse': {'shape': 'rect', 'gamma_tc': 3.0}})
        with self.assertRaises(ConfigError):
            resolve_config({'pulse': {'shape': 'sampled', 'samples': [1.0]}})
        with self.assertRaises(ConfigError):
            resolve_config({'pulse': {'shape': 'rect', 'samples': [1.0], 'samples_dt': 0.1}})

    def test_manifest_is_a_config(self):
        resolved = resolve_config(read_config(TestReadConfig.CONFIG_CHIRAL_RECT))
        manifest = {'manifest_version': 1, 'command': 'simulate', 'config': resolved, 'files': {}}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "manifest.json"
            path.write_text(json.dumps(manifest, indent=2))
            self.assertEqual(read_config(path), resolved)


class TestBuildScenario(unittest.TestCase):

    def test_chiral_rect(self):
        scenario = build_scenario(read_config(TestReadConfig.CONFIG_CHIRAL_RECT))
        self.assertEqual(scenario.params.kind, 'chiral')
        self.assertEqual(scenario.pulse.t_p, 2.0)
        self.assertEqual(scenario.grid.dt, 0.01)
        # pulse support plus the default decay tail
        self.assertAlmostEqual(scenario.grid.t_end, 2.0 + SETTINGS.GRID.tail)
        self.assertEqual(scenario.engines, ('analytic', 'mps'))
        self.assertEqual(scenario.policy.max_bond, 16)
        self.assertFalse(scenario.wants_g1)

    def test_engine_override(self):
        config_dict = read_config(TestReadConfig.CONFIG_CHIRAL_RECT)
        self.assertEqual(build_scenario(config_dict, engine_override='mps').engines, ('mps',))
        self.assertEqual(build_scenario(config_dict, engine_override='analytic').engines, ('analytic',))
        self.assertEqual(build_scenario(config_dict, engine_override='both').engines, ('analytic', 'mps'))
        with self.assertRaises(ConfigError):
            build_scenario(config_dict, engine_override='dense')
        # the override does not leak into the caller's dict
        self.assertEqual(config_dict['engines'], {'analytic': True, 'mps': True})

    def test_zero_samples(self):
        with self.assertRaises(ConfigError) as cm:
            build_scenario(read_config(TestReadConfig.CONFIG_ZERO_SAMPLES))
        self.assertIn("normalization", str(cm.exception))

    def test_detuned_analytic(self):
        with self.assertRaises(ConfigError):
            build_scenario(read_config(TestReadConfig.CONFIG_DETUNED_ANALYTIC))
        scenario = build_scenario(read_config(TestReadConfig.CONFIG_DETUNED_ANALYTIC), engine_override='mps')
        self.assertEqual(scenario.params.delta, 1.5)

    def test_two_photon_correlations_need_mps(self):
        config_dict = {'pulse': {'photons': 2}, 'outputs': {'g1': True}}
        with self.assertRaises(ConfigError):
            build_scenario(config_dict, engine_override='analytic')
        self.assertTrue(build_scenario(config_dict).wants_g1)

    def test_max_bond_too_small_for_photons(self):
        with self.assertRaises(ConfigError):
            build_scenario({'pulse': {'photons': 2}, 'mps': {'max_bond': 2}})

    def test_sampled(self):
        scenario = build_scenario(read_config(TestReadConfig.CONFIG_SAMPLED))
        self.assertEqual(scenario.pulse.shape, 'sampled')
        self.assertEqual(scenario.pulse.photons, 2)
        self.assertEqual(scenario.params.channels, 2)
        self.assertAlmostEqual(scenario.grid.t_end, 8.0)
        self.assertEqual(scenario.engines, ('mps',))

    def test_omegas(self):
        scenario = build_scenario({'spectra': {'omega_min': -2.0, 'omega_max': 2.0, 'n_omega': 5}})
        self.assertEqual(list(scenario.omegas), [-2.0, -1.0, 0.0, 1.0, 2.0])


class TestConfigSets(unittest.TestCase):

    CONFIG_SET_GRID = RESOURCES / "config_set_grid.yaml"
    CONFIG_SET_DUPLICATE = RESOURCES / "config_set_duplicate.yaml"
    CONFIG_SET_UNKNOWN_TYPE = RESOURCES / "config_set_unknown_type.yaml"

    def test_generate_grid(self):
        key, values = config.generate_grid({'type': 'choice', 'options': [2.0, 10.0]}, 'pulse.gamma_tp')
        self.assertEqual(key, 'pulse.gamma_tp')
        self.assertEqual(values, [2.0, 10.0])
        _, values = config.generate_grid({'type': 'range', 'min': 1.0, 'max': 2.0, 'step': 0.5})
        self.assertEqual(values, [1.0, 1.5])
        _, values = config.generate_grid({'type': 'loguniform', 'min': 1.0, 'max': 100.0, 'num': 3})
        for value, expected in zip(values, [1.0, 10.0, 100.0]):
            self.assertAlmostEqual(value, expected)
        with self.assertRaises(ConfigError):
            config.generate_grid({'type': 'choice', 'options': [1], 'min': 0})
        with self.assertRaises(ConfigError):
            config.generate_grid({'options': [1]})

    def test_expand_with_dict_choice(self):
        configs = read_config_set(self.CONFIG_SET_GRID)
        self.assertEqual(len(configs), 4)
        expected_first = {
            'grid': {'gamma_dt': 0.02},
            'engines': {'analytic': True, 'mps': False},
            'emitter': {'kind': 'chiral'},
            'pulse': {'shape': 'rect', 'gamma_tp': 2.0},
        }
        self.assertEqual(configs[0], expected_first)
        kinds_and_shapes = [(c['emitter']['kind'], c['pulse']['shape']) for c in configs]
        self.assertEqual(kinds_and_shapes, [('chiral', 'rect'), ('chiral', 'gaussian'),
                                            ('symmetric', 'rect'), ('symmetric', 'gaussian')])

    def test_dict_choice_merges_into_existing_block(self):
        config_set = {
            'fixed': {'pulse.photons': 2},
            'grid': {'pulse': {'type': 'choice', 'options': [{'shape': 'rect', 'gamma_tp': 2.0}]}},
        }
        self.assertEqual(generate_configs(config_set),
                         [{'pulse': {'photons': 2, 'shape': 'rect', 'gamma_tp': 2.0}}])

    def test_fixed_only(self):
        self.assertEqual(generate_configs({'fixed': {'pulse': {'gamma_tp': 5.0}}}), [{'pulse': {'gamma_tp': 5.0}}])

    def test_duplicate_parameters(self):
        with self.assertRaises(ConfigError):
            read_config_set(self.CONFIG_SET_DUPLICATE)

    def test_unknown_grid_type(self):
        with self.assertRaises(ConfigError):
            read_config_set(self.CONFIG_SET_UNKNOWN_TYPE)

    def test_unknown_set_block(self):
        with self.assertRaises(ConfigError):
            generate_configs({'random': {'samples': 3}})

    def test_invalid_expansion_rejected(self):
        config_set = {'grid': {'pulse.photons': {'type': 'choice', 'options': [1, 3]}}}
        with self.assertRaises(ConfigError):
            generate_configs(config_set)

    def test_bundled_suite(self):
        configs = read_config_set(SETTINGS.VERIFY.suite)
        self.assertEqual(len(configs), 8)
        combinations = {(c['emitter']['kind'], c['pulse']['photons'], c['pulse']['shape']) for c in configs}
        self.assertEqual(len(combinations), 8)
        for config_dict in configs:
            scenario = build_scenario(config_dict)
            self.assertEqual(scenario.engines, ('analytic', 'mps'))
            self.assertEqual(scenario.grid.dt, 0.01)


if __name__ == '__main__':
    unittest.main()
