import copy
import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
import yaml

from wgpulse.errors import BondDimensionError, ConfigError
from wgpulse.mps_engine import load_checkpoint
from wgpulse.plotting import PLOT_SCRIPT_NAME
from wgpulse.settings import SETTINGS
from wgpulse.simulate import (CHECKPOINT_NAME, DIFF_SUMMARY_NAME, MANIFEST_NAME, output_dir, simulate,
                              spectra_job)
from wgpulse.utils import file_digest, make_hash

RESOURCES = Path(__file__).parent / "resources"
CONFIG_GAUSSIAN_SPECTRA = RESOURCES / "config" / "scenario_gaussian_spectra.yaml"

with open(RESOURCES / "golden" / "csv_headers.yaml", 'r') as f:
    CSV_HEADERS = yaml.safe_load(f)

CHIRAL_RECT = {
    'emitter': {'kind': 'chiral'},
    'pulse': {'shape': 'rect', 'gamma_tp': 2.0, 'photons': 1},
    'grid': {'gamma_dt': 0.01, 'gamma_tmax': 8.0},
    'engines': {'analytic': True, 'mps': True},
}


def header(path):
    with open(path, 'r', encoding='utf-8') as f:
        return f.readline().rstrip('\n')


def read_manifest(out_dir):
    with open(Path(out_dir) / MANIFEST_NAME, 'r') as f:
        return json.load(f)


class TestSimulate(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.out = Path(cls.tmp.name) / "run"
        cls.manifest = simulate(copy.deepcopy(CHIRAL_RECT), out=str(cls.out))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_files(self):
        for name in ["population_analytic.csv", "population_mps.csv", "flux_analytic.csv", "flux_mps.csv",
                     DIFF_SUMMARY_NAME, MANIFEST_NAME]:
            self.assertTrue((self.out / name).exists(), msg=name)
        self.assertFalse((self.out / PLOT_SCRIPT_NAME).exists())
        self.assertFalse((self.out / CHECKPOINT_NAME).exists())

    def test_csv_headers(self):
        for engine in SETTINGS.ENGINES:
            self.assertEqual(header(self.out / f"population_{engine}.csv"), CSV_HEADERS['population'])
            self.assertEqual(header(self.out / f"flux_{engine}.csv"), CSV_HEADERS['flux'])

    def test_population_values(self):
        frame = pd.read_csv(self.out / "population_mps.csv")
        self.assertEqual(len(frame), 800)
        self.assertAlmostEqual(frame['gamma_t'].iloc[0], 0.01)
        self.assertAlmostEqual(frame['n_tls'].max(), 0.7991528, delta=4e-3)
        flux = pd.read_csv(self.out / "flux_analytic.csv")
        self.assertAlmostEqual(flux['gamma_t'].iloc[0], 0.005)
        np.testing.assert_array_equal(flux['flux_L'], 0.0)

    def test_manifest(self):
        manifest = read_manifest(self.out)
        self.assertEqual(manifest, json.loads(json.dumps(self.manifest)))
        self.assertEqual(manifest['status'], 'completed')
        self.assertEqual(manifest['command'], 'simulate')
        self.assertEqual(manifest['manifest_version'], 1)
        self.assertEqual(manifest['csv_schema_version'], SETTINGS.CSV.schema_version)
        self.assertEqual(manifest['config_hash'], make_hash(manifest['config']))
        self.assertEqual(manifest['config']['mps']['max_bond'], SETTINGS.MPS_DEFAULT.max_bond)
        self.assertIn('numpy', manifest['versions'])
        self.assertNotIn('error', manifest)
        for name, digest in manifest['files'].items():
            self.assertEqual(file_digest(self.out / name), digest, msg=name)
        self.assertIn(DIFF_SUMMARY_NAME, manifest['files'])
        for engine in SETTINGS.ENGINES:
            self.assertLess(manifest['engines'][engine]['conservation_final'], 1e-6)
        self.assertLessEqual(manifest['engines']['mps']['max_bond_dim'], 2)

    def test_diff_summary(self):
        with open(self.out / DIFF_SUMMARY_NAME, 'r') as f:
            summary = json.load(f)
        self.assertEqual(set(summary), {'population', 'flux_R', 'flux_L', 'N_R', 'N_L'})
        self.assertLess(summary['population']['max_abs'], 4e-3)
        self.assertLessEqual(summary['population']['rms'], summary['population']['max_abs'])
        self.assertEqual(summary['flux_L']['max_abs'], 0.0)
        self.assertEqual(self.manifest['diff_summary'], summary)

    def test_rerun_is_byte_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            simulate(copy.deepcopy(CHIRAL_RECT), out=tmp)
            for name in self.manifest['files']:
                self.assertEqual((Path(tmp) / name).read_bytes(), (self.out / name).read_bytes(), msg=name)

    def test_rerun_from_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = simulate(str(self.out / MANIFEST_NAME), out=tmp, engine='analytic')
            self.assertEqual(list(manifest['engines']), ['analytic'])
            self.assertEqual(manifest['config']['pulse'], self.manifest['config']['pulse'])
            self.assertEqual((Path(tmp) / "population_analytic.csv").read_bytes(),
                             (self.out / "population_analytic.csv").read_bytes())


class TestOutputDirectory(unittest.TestCase):

    def test_precedence(self):
        with tempfile.TemporaryDirectory() as tmp:
            env_dir, flag_dir = Path(tmp) / "from_env", Path(tmp) / "from_flag"
            with mock.patch.dict(os.environ, {SETTINGS.OUTPUT_DIR_ENV: str(env_dir)}):
                self.assertEqual(output_dir(), env_dir)
                self.assertEqual(output_dir(str(flag_dir)), flag_dir)
            self.assertTrue(env_dir.is_dir())
            self.assertTrue(flag_dir.is_dir())

    def test_environment_variable(self):
        config_dict = dict(copy.deepcopy(CHIRAL_RECT), engines={'analytic': True, 'mps': False})
        with tempfile.TemporaryDirectory() as tmp:
            with mock.patch.dict(os.environ, {SETTINGS.OUTPUT_DIR_ENV: tmp}):
                simulate(config_dict)
            self.assertTrue((Path(tmp) / MANIFEST_NAME).exists())
            self.assertTrue((Path(tmp) / "population_analytic.csv").exists())


class TestSimulateOptions(unittest.TestCase):

    def test_g1_output_and_checkpoint(self):
        config_dict = copy.deepcopy(CHIRAL_RECT)
        config_dict['grid'] = {'gamma_dt': 0.05, 'gamma_tmax': 6.0}
        config_dict['engines'] = {'analytic': False, 'mps': True}
        config_dict['mps'] = {'checkpoint': True}
        config_dict['outputs'] = {'g1': True}
        config_dict['spectra'] = {'time_stride': 4}
        with tempfile.TemporaryDirectory() as tmp:
            manifest = simulate(config_dict, out=tmp)
            self.assertEqual(header(Path(tmp) / "g1_mps.csv"), CSV_HEADERS['g1'])
            g1 = pd.read_csv(Path(tmp) / "g1_mps.csv")
            # 120 steps, every 4th t and tau inside the triangle
            self.assertEqual(len(g1), sum(1 for i in range(0, 120, 4) for j in range(0, 120, 4) if i + j < 120))
            self.assertTrue(np.all(g1['gamma_t'] + g1['gamma_tau'] <= 6.0 + 1e-9))
            self.assertIn(CHECKPOINT_NAME, manifest['files'])
            state = load_checkpoint(Path(tmp) / CHECKPOINT_NAME)
            self.assertEqual(state.n_bins, 120)
            self.assertEqual(state.emitter_index, 120)

    def test_sampled_symmetric_two_photon(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = simulate(str(RESOURCES / "config" / "scenario_sampled.yaml"), out=tmp)
            self.assertEqual(list(manifest['engines']), ['mps'])
            self.assertNotIn('gamma_tp', manifest['config']['pulse'])
            self.assertEqual(manifest['config']['pulse']['samples'], [1.0, 2.0, 2.0, 1.0])
            frame = pd.read_csv(Path(tmp) / "population_mps.csv")
            self.assertAlmostEqual(frame['excitations'].iloc[-1], 2.0, delta=1e-3)
            self.assertGreater(pd.read_csv(Path(tmp) / "flux_mps.csv")['flux_L'].max(), 0.0)

    def test_engine_failure_writes_manifest(self):
        config_dict = {
            'pulse': {'shape': 'rect', 'gamma_tp': 2.0, 'photons': 2},
            'grid': {'gamma_dt': 0.05, 'gamma_tmax': 6.0},
            'engines': {'analytic': True, 'mps': True},
            'mps': {'max_bond': 3},
        }
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(BondDimensionError):
                simulate(config_dict, out=tmp)
            manifest = read_manifest(tmp)
            self.assertEqual(manifest['status'], 'failed')
            self.assertEqual(manifest['error']['engine'], 'mps')
            self.assertIn('discarded_weight', manifest['error']['residuals'])
            # the analytic engine ran first and its outputs are kept
            self.assertEqual(list(manifest['engines']), ['analytic'])
            self.assertIn("population_analytic.csv", manifest['files'])

    def test_missing_config(self):
        with self.assertRaises(ConfigError):
            simulate(None)
        with self.assertRaises(ConfigError):
            simulate(str(RESOURCES / "config" / "does_not_exist.yaml"))


class TestSpectraJob(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.out = Path(cls.tmp.name)
        cls.manifest = spectra_job(str(CONFIG_GAUSSIAN_SPECTRA), out=str(cls.out))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_files_and_headers(self):
        for prefix in ['spectrum', 'intensity', 'stationary']:
            self.assertEqual(header(self.out / f"{prefix}_analytic.csv"), CSV_HEADERS[prefix])
        self.assertEqual(header(self.out / "spectrum_free.csv"), CSV_HEADERS['spectrum'])
        self.assertEqual(header(self.out / "stationary_free.csv"), CSV_HEADERS['stationary_free'])
        self.assertEqual(header(self.out / "g1_analytic.csv"), CSV_HEADERS['g1'])
        self.assertIn(PLOT_SCRIPT_NAME, self.manifest['files'])
        self.assertTrue(os.access(self.out / PLOT_SCRIPT_NAME, os.X_OK))

    def test_strided_times(self):
        spectrum = pd.read_csv(self.out / "spectrum_analytic.csv")
        times = np.unique(spectrum['gamma_t'])
        # 600 steps on (0, 12], S is also reported at t = 0
        self.assertEqual(times[0], 0.0)
        self.assertAlmostEqual(times[-1], 12.0)
        self.assertEqual(len(times), len(range(0, 601, 25)))
        self.assertEqual(len(spectrum), len(times) * 21)

    def test_spectral_checks(self):
        checks = self.manifest['spectral_checks']
        self.assertLess(checks['analytic']['stationary_rms'], SETTINGS.VERIFY.spectral_rms_tolerance)
        self.assertLess(checks['analytic']['intensity_identity_rms'], SETTINGS.VERIFY.spectral_rms_tolerance)
        self.assertNotIn('stationary_rms', checks['free'])
        self.assertAlmostEqual(checks['analytic']['central_lobe_fwhm'], checks['analytic']['input_central_lobe_fwhm'],
                               delta=0.05)

    def test_chiral_output_matches_input_spectrum(self):
        stationary = pd.read_csv(self.out / "stationary_analytic.csv")
        self.assertEqual(len(stationary), 21)
        np.testing.assert_allclose(stationary['S'], stationary['input_spectrum'], atol=5e-3)
        np.testing.assert_allclose(stationary['closed_form'], stationary['input_spectrum'], rtol=1e-10)

    def test_plot_script(self):
        script = (self.out / PLOT_SCRIPT_NAME).read_text(encoding='utf-8')
        self.assertIn("['analytic']", script)
        self.assertIn(SETTINGS.CSV.omega_column, script)
        compile(script, PLOT_SCRIPT_NAME, 'exec')

    def test_outputs_forced_on(self):
        outputs = self.manifest['config']['outputs']
        self.assertTrue(outputs['spectrum'] and outputs['intensity'] and outputs['stationary'])


class TestTwoPhotonSpectra(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.config = {
            'emitter': {'kind': 'chiral'},
            'pulse': {'shape': 'rect', 'gamma_tp': 10.0, 'photons': 2},
            'grid': {'gamma_dt': 0.05},
            'engines': {'analytic': False, 'mps': True},
            'spectra': {'omega_min': -5.0, 'omega_max': 5.0, 'n_omega': 201, 'time_stride': 50},
        }

    def tearDown(self):
        self.tmp.cleanup()

    def test_central_local_minimum(self):
        manifest = spectra_job(self.config, out=self.tmp.name)
        checks = manifest['spectral_checks']['mps']
        self.assertNotIn('stationary_rms', checks)
        self.assertGreater(checks['input_central_lobe_fwhm'], 0.0)
        stationary = pd.read_csv(Path(self.tmp.name) / "stationary_mps.csv")
        self.assertEqual(list(stationary.columns), CSV_HEADERS['stationary_free'].split(','))
        S = stationary['S'].to_numpy()
        centre = int(np.argmin(np.abs(stationary[SETTINGS.CSV.omega_column].to_numpy())))
        self.assertAlmostEqual(stationary[SETTINGS.CSV.omega_column].iloc[centre], 0.0, places=9)
        # the pulse breaks up: S(0) sits between two side maxima
        self.assertLess(S[centre], S[centre - 1])
        self.assertLess(S[centre], S[centre + 1])
        self.assertLess(S[centre], 0.75 * np.max(S))
        self.assertNotEqual(int(np.argmax(S)), centre)

    def test_single_photon_keeps_width(self):
        self.config['pulse']['photons'] = 1
        manifest = spectra_job(self.config, out=self.tmp.name, engine='analytic')
        checks = manifest['spectral_checks']['analytic']
        self.assertAlmostEqual(checks['central_lobe_fwhm'] / checks['input_central_lobe_fwhm'], 1.0, delta=0.02)


if __name__ == '__main__':
    unittest.main()
