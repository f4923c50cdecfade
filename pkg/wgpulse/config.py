import ast
import copy
import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
import yaml

from wgpulse.errors import ConfigError
from wgpulse.model import EmitterParams, PulseSpec, TimeGrid, grid_for_pulse
from wgpulse.mps_engine import TruncationPolicy
from wgpulse.settings import SETTINGS
from wgpulse.utils import flatten, merge_dicts, set_by_dotted_key

RESERVED_KEYS = ['grid', 'fixed']


def _convert_value(value):
    """
    Parse string as python literal if possible and fallback to string.
    YAML 1.1 reads e.g. `1e-12` as a string, this turns it back into a number.
    """
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        # use as string if nothing else worked
        return value


def convert_values(val):
    if isinstance(val, dict):
        for key, inner_val in val.items():
            val[key] = convert_values(inner_val)
    elif isinstance(val, list):
        for i, inner_val in enumerate(val):
            val[i] = convert_values(inner_val)
    elif isinstance(val, str):
        return _convert_value(val)
    return val


class YamlUniqueLoader(yaml.FullLoader):
    """
    Custom YAML loader that disallows duplicate keys

    From https://github.com/encukou/naucse_render/commit/658197ed142fec2fe31574f1ff24d1ff6d268797
    Workaround for PyYAML issue: https://github.com/yaml/pyyaml/issues/165
    This disables some uses of YAML merge (`<<`)
    """


def construct_mapping(loader, node, deep=False):
    """Construct a YAML mapping node, avoiding duplicates"""
    loader.flatten_mapping(node)
    result = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in result:
            raise ConfigError(f"Found duplicate keys: '{key}'")
        result[key] = loader.construct_object(value_node, deep=deep)
    return result


YamlUniqueLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG,
    construct_mapping,
)


def load_yaml(config_path):
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"Config file {config_path} does not exist.")
    with open(config_path, 'r') as conf:
        try:
            config_dict = yaml.load(conf, Loader=YamlUniqueLoader)
        except yaml.YAMLError as e:
            raise ConfigError(f"Could not parse {config_path}: {e}")
    if config_dict is None:
        config_dict = {}
    if not isinstance(config_dict, dict):
        raise ConfigError(f"{config_path} must contain a mapping at the top level.")
    return convert_values(config_dict)


def read_config(config_path):
    """
    Read a scenario config (YAML) or a run manifest (JSON, which is valid YAML).

    For a manifest the recorded resolved config is returned, so re-running it repeats the run.
    """
    config_dict = load_yaml(config_path)
    if 'manifest_version' in config_dict:
        if 'config' not in config_dict:
            raise ConfigError(f"Manifest {config_path} has no 'config' entry.")
        logging.info(f"Re-running the resolved config recorded in manifest {config_path}.")
        config_dict = config_dict['config']
    validate_config(config_dict)
    return config_dict


def _block_keys(block):
    return SETTINGS[f"VALID_{block.upper()}_CONFIG_VALUES"]


def validate_config(config_dict: dict):
    """Reject unknown blocks/keys and out-of-range values. Does not fill in defaults."""
    for block, values in config_dict.items():
        if block not in SETTINGS.VALID_CONFIG_BLOCKS:
            raise ConfigError(f"'{block}' is not a valid config block. "
                              f"Valid blocks: {SETTINGS.VALID_CONFIG_BLOCKS}.")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"The `{block}` config block must be a mapping.")
        for k in values.keys():
            if k not in _block_keys(block):
                raise ConfigError(f"{k} is not a valid value in the `{block}` config block.")

    emitter = config_dict.get('emitter') or {}
    if 'kind' in emitter and emitter['kind'] not in SETTINGS.EMITTER_KINDS:
        raise ConfigError(f"emitter.kind must be one of {SETTINGS.EMITTER_KINDS}, got '{emitter['kind']}'.")
    _check_number(emitter, 'emitter', 'delta_over_gamma')

    pulse = config_dict.get('pulse') or {}
    if 'shape' in pulse and pulse['shape'] not in SETTINGS.PULSE_SHAPES:
        raise ConfigError(f"pulse.shape must be one of {SETTINGS.PULSE_SHAPES}, got '{pulse['shape']}'.")
    if 'photons' in pulse and pulse['photons'] not in SETTINGS.PHOTON_NUMBERS:
        raise ConfigError(f"pulse.photons must be one of {SETTINGS.PHOTON_NUMBERS}, got {pulse['photons']}.")
    for key in ['gamma_tp', 'samples_dt']:
        _check_number(pulse, 'pulse', key, positive=True)
    _check_number(pulse, 'pulse', 'gamma_tc')

    grid = config_dict.get('grid') or {}
    _check_number(grid, 'grid', 'gamma_dt', positive=True)
    if 'gamma_dt' in grid and grid['gamma_dt'] > SETTINGS.GRID.max_dt:
        raise ConfigError(f"grid.gamma_dt must lie in (0, {SETTINGS.GRID.max_dt}], got {grid['gamma_dt']}.")
    _check_number(grid, 'grid', 'gamma_tmax', positive=True)

    for block in ['engines', 'outputs']:
        for k, v in (config_dict.get(block) or {}).items():
            if not isinstance(v, bool):
                raise ConfigError(f"{block}.{k} must be true or false, got {v!r}.")
    if config_dict.get('engines') is not None and not any(config_dict['engines'].values()):
        raise ConfigError("At least one engine must be enabled.")

    mps = config_dict.get('mps') or {}
    _check_number(mps, 'mps', 'svd_cutoff')
    if 'svd_cutoff' in mps and not 0 <= mps['svd_cutoff'] < 1:
        raise ConfigError(f"mps.svd_cutoff must lie in [0, 1), got {mps['svd_cutoff']}.")
    if 'max_bond' in mps and (not isinstance(mps['max_bond'], int) or mps['max_bond'] < 2):
        raise ConfigError(f"mps.max_bond must be an integer >= 2, got {mps['max_bond']!r}.")
    if 'checkpoint' in mps and not isinstance(mps['checkpoint'], bool):
        raise ConfigError(f"mps.checkpoint must be true or false, got {mps['checkpoint']!r}.")

    spectra = config_dict.get('spectra') or {}
    _check_number(spectra, 'spectra', 'omega_min')
    _check_number(spectra, 'spectra', 'omega_max')
    for key in ['n_omega', 'time_stride']:
        if key in spectra and (not isinstance(spectra[key], int) or spectra[key] < 1):
            raise ConfigError(f"spectra.{key} must be a positive integer, got {spectra[key]!r}.")
    if 'reference' in spectra and not isinstance(spectra['reference'], bool):
        raise ConfigError(f"spectra.reference must be true or false, got {spectra['reference']!r}.")


def _check_number(block_dict, block, key, positive=False):
    if key not in block_dict:
        return
    value = block_dict[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{block}.{key} must be a finite number, got {value!r}.")
    if positive and value <= 0:
        raise ConfigError(f"{block}.{key} must be positive, got {value}.")


def default_config():
    return {
        'emitter': {'kind': 'chiral', 'delta_over_gamma': 0.0},
        'pulse': {'shape': 'rect', 'gamma_tp': 2.0, 'photons': 1},
        'grid': {'gamma_dt': SETTINGS.GRID.gamma_dt},
        'engines': {engine: True for engine in SETTINGS.ENGINES},
        'mps': {k: SETTINGS.MPS_DEFAULT[k] for k in SETTINGS.VALID_MPS_CONFIG_VALUES},
        'outputs': dict(SETTINGS.OUTPUTS_DEFAULT),
        'spectra': dict(SETTINGS.SPECTRA_DEFAULT),
    }


def resolve_config(config_dict: dict):
    """Validate and fill in defaults; the result is what a run manifest records."""
    validate_config(config_dict)
    resolved = merge_dicts(default_config(), {k: v for k, v in config_dict.items() if v is not None})
    pulse = resolved['pulse']
    if pulse['shape'] == 'gaussian':
        pulse.setdefault('gamma_tc', 3.0)
    if pulse['shape'] == 'sampled':
        pulse.pop('gamma_tp', None)
        if 'samples' not in pulse or 'samples_dt' not in pulse:
            raise ConfigError("Sampled pulses need pulse.samples and pulse.samples_dt.")
    if pulse['shape'] != 'sampled' and ('samples' in pulse or 'samples_dt' in pulse):
        raise ConfigError(f"pulse.samples is only valid for sampled pulses, not '{pulse['shape']}'.")
    if pulse['shape'] == 'rect' and 'gamma_tc' in pulse:
        raise ConfigError("pulse.gamma_tc is only valid for gaussian pulses.")
    # the sampled list is echoed verbatim, numpy scalars would not survive JSON
    return json.loads(json.dumps(resolved))


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    params: EmitterParams
    pulse: PulseSpec
    grid: TimeGrid
    engines: Tuple[str, ...]
    policy: TruncationPolicy
    outputs: dict
    spectra: dict
    checkpoint: bool
    resolved: dict

    @property
    def omegas(self):
        return np.linspace(self.spectra['omega_min'], self.spectra['omega_max'], self.spectra['n_omega'])

    @property
    def wants_g1(self):
        return any(self.outputs[k] for k in ['g1', 'spectrum', 'intensity', 'stationary'])


def build_scenario(config_dict: dict, engine_override=None):
    """
    Turn a (raw or resolved) config dict into engine inputs.

    Parameters
    ----------
    config_dict: dict
    engine_override: str, optional
        'analytic', 'mps' or 'both'; replaces the `engines` block.

    Returns
    -------
    ScenarioConfig
    """
    if engine_override is not None:
        if engine_override not in SETTINGS.ENGINES + ['both']:
            raise ConfigError(f"Unknown engine '{engine_override}'.")
        config_dict = copy.deepcopy(config_dict)
        config_dict['engines'] = {engine: engine_override in (engine, 'both') for engine in SETTINGS.ENGINES}
    resolved = resolve_config(config_dict)

    emitter, pulse_cfg, grid_cfg = resolved['emitter'], resolved['pulse'], resolved['grid']
    params = EmitterParams.from_kind(emitter['kind'], gamma=1.0, delta=emitter['delta_over_gamma'])
    try:
        if pulse_cfg['shape'] == 'rect':
            pulse = PulseSpec.rect(pulse_cfg['gamma_tp'], photons=pulse_cfg['photons'])
        elif pulse_cfg['shape'] == 'gaussian':
            pulse = PulseSpec.gaussian(pulse_cfg['gamma_tc'], pulse_cfg['gamma_tp'], photons=pulse_cfg['photons'])
        else:
            pulse = PulseSpec.sampled(pulse_cfg['samples'], pulse_cfg['samples_dt'], photons=pulse_cfg['photons'])
    except ValueError as e:
        raise ConfigError(str(e))
    grid = grid_for_pulse(pulse, dt=grid_cfg['gamma_dt'], t_end=grid_cfg.get('gamma_tmax'))

    engines = tuple(engine for engine in SETTINGS.ENGINES if resolved['engines'].get(engine))
    if 'analytic' in engines and params.delta != 0:
        raise ConfigError("The analytic engine requires emitter.delta_over_gamma = 0.")
    outputs = resolved['outputs']
    wants_g1 = any(outputs[k] for k in ['g1', 'spectrum', 'intensity', 'stationary'])
    if wants_g1 and engines == ('analytic',) and pulse.photons == 2:
        raise ConfigError("Two-photon correlations and spectra need the mps engine.")
    try:
        policy = TruncationPolicy(resolved['mps']['svd_cutoff'], resolved['mps']['max_bond'])
        policy.check_photons(pulse.photons)
    except ValueError as e:
        raise ConfigError(str(e))
    return ScenarioConfig(params=params, pulse=pulse, grid=grid, engines=engines, policy=policy,
                          outputs=outputs, spectra=resolved['spectra'], checkpoint=resolved['mps']['checkpoint'],
                          resolved=resolved)


def generate_grid(parameter, parent_key=''):
    """
    Generate the values of one grid parameter.

    Parameters
    ----------
    parameter: dict
        Defines the type of parameter. Options for parameter['type'] are
            - choice: Expects a list of options in parameter['options'], which will be returned.
            - range: Expects 'min', 'max', and 'step' keys, used as np.arange(min, max, step).
            - loguniform: 'num' points spaced evenly in log space between 'min' and 'max'.
    parent_key: str
        Flat (dotted) name of the parameter.

    Returns
    -------
    (parent_key, values): tuple(str, list)
    """
    if not isinstance(parameter, dict) or "type" not in parameter:
        raise ConfigError(f"No type found in grid parameter '{parent_key}': {parameter}")
    param_type = parameter['type']
    if param_type == "choice":
        allowed_keys = ['type', 'options']
        values = list(parameter['options'])
    elif param_type == "range":
        allowed_keys = ['type', 'min', 'max', 'step']
        values = [float(v) for v in np.arange(parameter['min'], parameter['max'], parameter['step'])]
    elif param_type == "loguniform":
        allowed_keys = ['type', 'min', 'max', 'num']
        values = [float(v) for v in np.logspace(np.log10(parameter['min']), np.log10(parameter['max']),
                                                int(parameter['num']), endpoint=True)]
    else:
        raise ConfigError(f"Parameter '{parent_key}' has unknown grid type '{param_type}'.")
    extra_keys = set(parameter.keys()) - set(allowed_keys)
    if extra_keys:
        raise ConfigError(f"Unexpected keys in grid parameter '{parent_key}': {sorted(extra_keys)}.")
    if len(values) == 0:
        raise ConfigError(f"Grid parameter '{parent_key}' has no values.")
    return parent_key, values


def _assign(config, key, value):
    """Set a dotted key; mappings are merged into an existing block instead of replacing it."""
    parts = key.split('.')
    current = config
    for part in parts:
        current = current.get(part) if isinstance(current, dict) else None
    if isinstance(value, dict) and isinstance(current, dict):
        value = merge_dicts(current, value)
    set_by_dotted_key(config, key, copy.deepcopy(value))


def generate_configs(config_set: dict):
    """
    Expand a config set into scenario configs.

    A config set has a `fixed` block (dotted or nested keys shared by all scenarios) and a
    `grid` block whose parameters are combined as a cartesian product.

    Returns
    -------
    all_configs: list of dicts
    """
    unknown = set(config_set.keys()) - set(RESERVED_KEYS)
    if unknown:
        raise ConfigError(f"Config sets only accept {RESERVED_KEYS} blocks, found {sorted(unknown)}.")
    fixed = flatten(config_set.get('fixed') or {})
    grid_params = [generate_grid(v, parent_key=k) for k, v in (config_set.get('grid') or {}).items()]

    duplicates = set(fixed) & {k for k, _ in grid_params}
    if duplicates:
        raise ConfigError(f"Found duplicate keys in fixed and grid: {sorted(duplicates)}")

    all_configs = []
    keys = [k for k, _ in grid_params]
    for combination in itertools.product(*[values for _, values in grid_params]):
        config = {}
        for k, v in fixed.items():
            _assign(config, k, v)
        for k, v in zip(keys, combination):
            _assign(config, k, v)
        validate_config(config)
        all_configs.append(config)
    return all_configs


def read_config_set(config_path):
    config_set = load_yaml(config_path)
    configs = generate_configs(config_set)
    logging.info(f"Expanded {config_path} into {len(configs)} scenario{'' if len(configs) == 1 else 's'}.")
    return configs
