import logging
import tempfile
import unittest
from pathlib import Path

from wgpulse import utils


class TestMergeDictionaries(unittest.TestCase):

    def test_basic(self):
        defaults = {'gamma_dt': 0.005, 'gamma_tmax': None}
        user = {'gamma_tmax': 20.0, 'extra': 1}
        merged = utils.merge_dicts(defaults, user)
        expected = {'gamma_dt': 0.005, 'gamma_tmax': 20.0, 'extra': 1}
        self.assertEqual(merged, expected)

    def test_nested(self):
        defaults = {'pulse': {'shape': 'rect', 'gamma_tp': 2.0}, 'grid': {'gamma_dt': 0.005}}
        user = {'pulse': {'gamma_tp': 10.0, 'photons': 2}}
        merged = utils.merge_dicts(defaults, user)
        expected = {'pulse': {'shape': 'rect', 'gamma_tp': 10.0, 'photons': 2}, 'grid': {'gamma_dt': 0.005}}
        self.assertEqual(merged, expected)

    def test_does_not_modify_inputs(self):
        defaults = {'mps': {'svd_cutoff': 1e-12}}
        user = {'mps': {'max_bond': 8}, 'pulse': {'samples': [1.0, 2.0]}}
        merged = utils.merge_dicts(defaults, user)
        merged['mps']['svd_cutoff'] = 0.1
        merged['pulse']['samples'].append(3.0)
        self.assertEqual(defaults, {'mps': {'svd_cutoff': 1e-12}})
        self.assertEqual(user['pulse']['samples'], [1.0, 2.0])

    def test_fails_not_dict(self):
        with self.assertRaises(ValueError):
            utils.merge_dicts({'a': 3}, ['not_dict'])
        with self.assertRaises(ValueError):
            utils.merge_dicts(['not_dict'], {'a': 3})

    def test_nested_non_dict_override(self):
        d1 = {'pulse': {'samples': {'values': 4}, 'photons': 1}}
        d2 = {'pulse': {'samples': [0.5, 0.5]}}
        self.assertEqual(utils.merge_dicts(d1, d2), {'pulse': {'samples': [0.5, 0.5], 'photons': 1}})
        self.assertEqual(utils.merge_dicts(d2, d1), d1)


class TestDottedKeys(unittest.TestCase):

    def test_flatten(self):
        nested = {'emitter': {'kind': 'chiral'}, 'pulse': {'gamma_tp': 2.0, 'photons': 1}, 'outputs': {}}
        self.assertEqual(utils.flatten(nested),
                         {'emitter.kind': 'chiral', 'pulse.gamma_tp': 2.0, 'pulse.photons': 1, 'outputs': {}})

    def test_set_creates_levels(self):
        config = {'pulse': {'shape': 'rect'}}
        utils.set_by_dotted_key(config, 'pulse.gamma_tp', 10.0)
        utils.set_by_dotted_key(config, 'grid.gamma_dt', 0.01)
        self.assertEqual(config, {'pulse': {'shape': 'rect', 'gamma_tp': 10.0}, 'grid': {'gamma_dt': 0.01}})

    def test_set_replaces_non_dict_level(self):
        config = {'pulse': 'rect'}
        utils.set_by_dotted_key(config, 'pulse.shape', 'gaussian')
        self.assertEqual(config, {'pulse': {'shape': 'gaussian'}})

    def test_flatten_then_set_restores(self):
        nested = {'emitter': {'kind': 'symmetric', 'delta_over_gamma': 0.0}, 'mps': {'max_bond': 16}}
        rebuilt = {}
        for key, value in utils.flatten(nested).items():
            utils.set_by_dotted_key(rebuilt, key, value)
        self.assertEqual(rebuilt, nested)


class TestHashes(unittest.TestCase):

    def test_config_hash_ignores_key_order(self):
        a = {'pulse': {'shape': 'rect', 'gamma_tp': 2.0}, 'grid': {'gamma_dt': 0.005}}
        b = {'grid': {'gamma_dt': 0.005}, 'pulse': {'gamma_tp': 2.0, 'shape': 'rect'}}
        self.assertEqual(utils.make_hash(a), utils.make_hash(b))
        self.assertNotEqual(utils.make_hash(a), utils.make_hash({'grid': {'gamma_dt': 0.01}}))

    def test_file_digest(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "data.csv"
            path.write_bytes(b"abc")
            # SHA-256 of "abc"
            self.assertEqual(utils.file_digest(path),
                             "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
            self.assertEqual(utils.file_digest(path, chunk_size=1), utils.file_digest(path))

    def test_s_if(self):
        self.assertEqual(utils.s_if(1), '')
        self.assertEqual(utils.s_if(3), 's')


class TestLogging(unittest.TestCase):

    def test_verbose_level_registered(self):
        self.assertEqual(logging.VERBOSE, 19)
        self.assertTrue(hasattr(logging, 'verbose'))
        self.assertTrue(hasattr(logging.getLoggerClass(), 'verbose'))

    def test_add_existing_level_fails(self):
        with self.assertRaises(AttributeError):
            utils.add_logging_level('VERBOSE', 19)

    def test_formatter(self):
        formatter = utils.LoggingFormatter()

        def record(level):
            return logging.LogRecord('root', level, 'model.py', 12, "grid too coarse", None, None)

        self.assertEqual(formatter.format(record(logging.INFO)), "grid too coarse")
        self.assertEqual(formatter.format(record(logging.VERBOSE)), "grid too coarse")
        self.assertEqual(formatter.format(record(logging.WARNING)), "WARNING: grid too coarse")
        self.assertTrue(formatter.format(record(logging.DEBUG)).startswith("DEBUG: "))

    def test_verbose_enabled(self):
        level = logging.root.level
        try:
            logging.root.setLevel(logging.INFO)
            self.assertFalse(utils.verbose_enabled())
            logging.root.setLevel(logging.VERBOSE)
            self.assertTrue(utils.verbose_enabled())
        finally:
            logging.root.setLevel(level)



if __name__ == '__main__':
    unittest.main()
