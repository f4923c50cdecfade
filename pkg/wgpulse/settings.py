import importlib.util
from munch import munchify
from pathlib import Path

from wgpulse.utils import merge_dicts

__all__ = ("SETTINGS",)

SETTINGS = munchify(
    {
        # Location of user-specific settings.py file containing a SETTINGS dict.
        # With this dict you can change anything that is set here, conveniently from your home directory.
        # Default: $HOME/.config/wgpulse/settings.py
        "USER_SETTINGS_PATH": Path.home() / ".config/wgpulse/settings.py",
        # Environment variable overriding the default output directory (the --out flag still wins).
        "OUTPUT_DIR_ENV": "WGPULSE_OUTPUT_DIR",
        "DEFAULT_OUTPUT_DIR": "wgpulse-out",

        "GRID": {
            'gamma_dt': 0.005,
            # decay tail appended after the pulse support, in units of 1/gamma
            'tail': 15.0,
            'max_dt': 0.05,
        },
        "MPS_DEFAULT": {
            'svd_cutoff': 1e-12,
            'max_bond': 64,
            'checkpoint': False,
        },
        # Per-step discarded weight may not exceed svd_cutoff times this factor.
        "TRUNCATION_BUDGET_FACTOR": 1e3,
        # |1 - <psi|psi>| may not exceed n_steps * svd_cutoff times this factor.
        "NORM_BUDGET_FACTOR": 10.0,
        "EXCITATION_TOLERANCE": 1e-6,
        # Sampled input amplitudes are renormalized exactly, but only if they are this close to unit norm.
        "BIN_NORM_TOLERANCE": 1e-3,
        "SPECTRA_DEFAULT": {
            'omega_min': -10.0,
            'omega_max': 10.0,
            'n_omega': 401,
            'time_stride': 10,
            'reference': False,
        },
        "OUTPUTS_DEFAULT": {
            'population': True,
            'flux': True,
            'g1': False,
            'spectrum': False,
            'intensity': False,
            'stationary': False,
        },
        "CSV": {
            'schema_version': 1,
            'float_format': '%.12g',
            'time_column': 'gamma_t',
            'tau_column': 'gamma_tau',
            'omega_column': 'omega_minus_wp_over_gamma',
        },
        # Gaussian envelopes are treated as supported on (0, t_c + GAUSSIAN_SUPPORT_WIDTHS * t_p].
        "GAUSSIAN_SUPPORT_WIDTHS": 6.0,
        "SWEEP": {
            # peaks of rectangular pulses sit at the pulse end, a short tail suffices
            'tail': 2.0,
            'tp_list': [2.0, 10.0, 60.0, 200.0, 500.0],
        },

        "PULSE_SHAPES": ['rect', 'gaussian', 'sampled'],
        "EMITTER_KINDS": ['chiral', 'symmetric'],
        "ENGINES": ['analytic', 'mps'],
        "PHOTON_NUMBERS": [1, 2],

        "VALID_CONFIG_BLOCKS": ['emitter', 'pulse', 'grid', 'engines', 'mps', 'outputs', 'spectra'],
        "VALID_EMITTER_CONFIG_VALUES": ['kind', 'delta_over_gamma'],
        "VALID_PULSE_CONFIG_VALUES": ['shape', 'gamma_tp', 'gamma_tc', 'photons', 'samples', 'samples_dt'],
        "VALID_GRID_CONFIG_VALUES": ['gamma_dt', 'gamma_tmax'],
        "VALID_ENGINES_CONFIG_VALUES": ['analytic', 'mps'],
        "VALID_MPS_CONFIG_VALUES": ['svd_cutoff', 'max_bond', 'checkpoint'],
        "VALID_OUTPUTS_CONFIG_VALUES": ['population', 'flux', 'g1', 'spectrum', 'intensity', 'stationary'],
        "VALID_SPECTRA_CONFIG_VALUES": ['omega_min', 'omega_max', 'n_omega', 'time_stride', 'reference'],

        "VERIFY": {
            'suite': Path(__file__).parent / "resources" / "verify_suite.yaml",
            'gamma_dt': 0.01,
            'n_omega': 81,
            'convergence_dt': [0.01, 0.005],
            'closed_form_tolerance': 1e-6,
            'conservation_tolerance': 1e-3,
            'cross_engine_tolerance': 2e-3,
            'diagonal_tolerance': 1e-9,
            'spectral_rms_tolerance': 0.02,
            'convergence_ratio': [1.4, 2.6],
        },
    },
)

# Load user settings
if SETTINGS.USER_SETTINGS_PATH.exists():
    spec = importlib.util.spec_from_file_location('user_settings', str(SETTINGS.USER_SETTINGS_PATH))
    user_settings_source = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(user_settings_source)
    SETTINGS = munchify(merge_dicts(SETTINGS, user_settings_source.SETTINGS))
