"""
Scenario execution: run the requested engines, write CSV files, diff summary and run manifest.
"""
import logging
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import scipy

from wgpulse.analytic import EmissionRecord, flux_general, g1_free, g1_qrt
from wgpulse.config import ScenarioConfig, build_scenario, read_config
from wgpulse.errors import ConfigError, EngineError
from wgpulse.json import dump_json
from wgpulse.model import G1Matrix, TimeSeries
from wgpulse.mps_engine import TimeBinMPS, build_input, correlation_matrix, evolve, save_checkpoint
from wgpulse.plotting import write_plot_script
from wgpulse.settings import SETTINGS
from wgpulse.spectra import (SpectrogramGrid, central_lobe_fwhm, integrate_intensity, rms_relative_error,
                             spectral_intensity, stationary_from_engine, time_dependent_spectrum)
from wgpulse.utils import file_digest, make_hash, s_if, verbose_enabled

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
DIFF_SUMMARY_NAME = "diff_summary.json"
CHECKPOINT_NAME = "mps_final_state.bin"


@dataclass(eq=False)
class EngineRun:
    """Everything one engine produced for a scenario."""
    engine: str
    record: EmissionRecord
    g1: Optional[G1Matrix] = None
    final_state: Optional[TimeBinMPS] = None
    wall_time: float = 0.0

    def residuals(self):
        residuals = {
            'conservation_final': self.record.final_residual(),
            'wall_time_s': round(self.wall_time, 3),
        }
        if self.final_state is not None:
            residuals['discarded_weight'] = self.final_state.discarded_weight
            residuals['max_bond_dim'] = self.final_state.max_bond_dim
        return residuals


def output_dir(out=None):
    """--out wins over the environment variable, which wins over the SETTINGS default."""
    if out is None:
        out = os.environ.get(SETTINGS.OUTPUT_DIR_ENV) or SETTINGS.DEFAULT_OUTPUT_DIR
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _analytic_record(scenario: ScenarioConfig):
    """
    Hierarchy on the half-step grid: populations and photon counts at t_k, fluxes at the bin
    centres t_k - dt/2, which is what the time-bin engine's bin averages correspond to.
    """
    grid = scenario.grid
    fine = flux_general(scenario.params, scenario.pulse, grid.refined(2))
    at_t, centres = slice(1, None, 2), slice(0, None, 2)
    return EmissionRecord(n_TLS=TimeSeries(grid, fine.n_TLS[at_t], 'n_tls'),
                          flux_R=TimeSeries(grid, fine.flux_R[centres], 'flux_R'),
                          flux_L=TimeSeries(grid, fine.flux_L[centres], 'flux_L'),
                          N_R=TimeSeries(grid, fine.N_R[at_t], 'N_R'),
                          N_L=TimeSeries(grid, fine.N_L[at_t], 'N_L'),
                          photons=fine.photons,
                          engine='analytic')


def run_analytic(scenario: ScenarioConfig):
    start = time.perf_counter()
    record = _analytic_record(scenario)
    g1 = None
    if scenario.wants_g1:
        if scenario.pulse.photons == 1:
            g1 = g1_qrt(scenario.params, scenario.pulse, scenario.grid, at_bin_centres=True)
        else:
            logging.info("The analytic engine has no two-photon correlator, only the mps engine reports G1.")
    run = EngineRun('analytic', record, g1=g1, wall_time=time.perf_counter() - start)
    logging.verbose(f"analytic engine finished in {run.wall_time:.2f}s.")
    return run


def run_mps(scenario: ScenarioConfig, progress=False):
    start = time.perf_counter()
    try:
        state = build_input(scenario.pulse, scenario.grid, channels=scenario.params.channels)
    except ValueError as e:
        raise ConfigError(str(e))
    record, final_state = evolve(state, scenario.params, scenario.grid, scenario.policy, progress=progress)
    g1 = correlation_matrix(final_state, scenario.grid) if scenario.wants_g1 else None
    run = EngineRun('mps', record, g1=g1, final_state=final_state, wall_time=time.perf_counter() - start)
    logging.verbose(f"mps engine finished in {run.wall_time:.2f}s.")
    return run


def run_scenario(scenario: ScenarioConfig, progress=None) -> Dict[str, EngineRun]:
    if progress is None:
        progress = verbose_enabled()
    runs = {}
    for engine in scenario.engines:
        if engine == 'analytic':
            runs[engine] = run_analytic(scenario)
        else:
            runs[engine] = run_mps(scenario, progress=progress)
    return runs


def write_csv(frame: pd.DataFrame, path):
    frame.to_csv(path, index=False, float_format=SETTINGS.CSV.float_format, lineterminator='\n',
                 encoding='utf-8')
    return Path(path)


def population_frame(record: EmissionRecord):
    return pd.DataFrame({
        SETTINGS.CSV.time_column: record.grid.times,
        'n_tls': record.n_TLS.values,
        'N_R': record.N_R.values,
        'N_L': record.N_L.values,
        'excitations': record.excitations(),
    })


def flux_frame(record: EmissionRecord):
    grid = record.grid
    return pd.DataFrame({
        SETTINGS.CSV.time_column: grid.times - grid.dt / 2,
        'flux_R': record.flux_R.values,
        'flux_L': record.flux_L.values,
    })


def g1_frame(g1: G1Matrix, stride=1):
    """Long format over the meaningful triangle, every `stride`-th t and tau."""
    n, dt = g1.grid.n_steps, g1.grid.dt
    i, j = np.meshgrid(np.arange(0, n, stride), np.arange(0, n, stride), indexing='ij')
    keep = i + j < n
    i, j = i[keep], j[keep]
    values = g1.data[i, j]
    return pd.DataFrame({
        SETTINGS.CSV.time_column: g1.grid.t(i),
        SETTINGS.CSV.tau_column: j * dt,
        'g1_re': values.real,
        'g1_im': values.imag,
    })


def spectrogram_frame(spectrogram, label):
    times, omegas = np.meshgrid(spectrogram.times, spectrogram.omegas, indexing='ij')
    return pd.DataFrame({
        SETTINGS.CSV.time_column: times.ravel(),
        SETTINGS.CSV.omega_column: omegas.ravel(),
        label: spectrogram.data.ravel(),
    })


def _stride_rows(spectrogram, stride):
    n = len(spectrogram.times)
    rows = np.unique(np.append(np.arange(0, n, stride), n - 1))
    return SpectrogramGrid(omegas=spectrogram.omegas, times=spectrogram.times[rows],
                           data=spectrogram.data[rows], label=spectrogram.label)


def _compare(a, b):
    difference = np.abs(np.asarray(a) - np.asarray(b))
    return {'max_abs': float(difference.max()), 'rms': float(np.sqrt(np.mean(difference ** 2)))}


def diff_summary(runs: Dict[str, EngineRun]):
    """Max abs error and RMS between the analytic and mps engine for every shared quantity."""
    analytic, mps = runs['analytic'].record, runs['mps'].record
    summary = {
        'population': _compare(analytic.n_TLS.values, mps.n_TLS.values),
        'flux_R': _compare(analytic.flux_R.values, mps.flux_R.values),
        'flux_L': _compare(analytic.flux_L.values, mps.flux_L.values),
        'N_R': _compare(analytic.N_R.values, mps.N_R.values),
        'N_L': _compare(analytic.N_L.values, mps.N_L.values),
    }
    if runs['analytic'].g1 is not None and runs['mps'].g1 is not None:
        summary['g1'] = _compare(runs['analytic'].g1.data, runs['mps'].g1.data)
    return summary


def write_engine_outputs(scenario: ScenarioConfig, run: EngineRun, out_dir: Path) -> List[Path]:
    written = []
    if scenario.outputs['population']:
        written.append(write_csv(population_frame(run.record), out_dir / f"population_{run.engine}.csv"))
    if scenario.outputs['flux']:
        written.append(write_csv(flux_frame(run.record), out_dir / f"flux_{run.engine}.csv"))
    if scenario.outputs['g1'] and run.g1 is not None:
        written.append(write_csv(g1_frame(run.g1, scenario.spectra['time_stride']),
                                 out_dir / f"g1_{run.engine}.csv"))
    return written


def _lobe_width(omegas, spectrum, name):
    try:
        return central_lobe_fwhm(omegas, spectrum)
    except ValueError as e:
        logging.warning(f"No central lobe width for '{name}': {e}")
        return None


def write_spectra(scenario: ScenarioConfig, name, g1: G1Matrix, out_dir: Path, threads=1, with_reference=True):
    """
    S(w, t), I(w, t) and the long-time spectrum of one G1 matrix.

    Returns the written paths and a dict of spectral checks (intensity identity, closed form, central lobe widths).
    """
    omegas = scenario.omegas
    stride = scenario.spectra['time_stride']
    outputs = scenario.outputs
    written, checks = [], {}
    S = None
    if outputs['spectrum'] or outputs['intensity']:
        S = time_dependent_spectrum(g1, omegas, stride=stride, threads=threads)
    if outputs['spectrum']:
        written.append(write_csv(spectrogram_frame(S, 'S'), out_dir / f"spectrum_{name}.csv"))
    if outputs['intensity']:
        intensity = spectral_intensity(g1, omegas, threads=threads)
        checks['intensity_identity_rms'] = rms_relative_error(integrate_intensity(intensity), S.final)
        written.append(write_csv(spectrogram_frame(_stride_rows(intensity, stride), 'I'),
                                 out_dir / f"intensity_{name}.csv"))
    if outputs['stationary']:
        stationary = stationary_from_engine(g1, omegas, scenario.params if with_reference else None,
                                            scenario.pulse)
        frame = pd.DataFrame({
            SETTINGS.CSV.omega_column: omegas,
            'S': stationary.spectrum,
            'input_spectrum': stationary.input_spectrum,
        })
        if stationary.reference is not None:
            frame['closed_form'] = stationary.reference
            checks['stationary_rms'] = stationary.rms_error
        if stationary.input_spectrum is not None:
            checks['central_lobe_fwhm'] = _lobe_width(omegas, stationary.spectrum, name)
            checks['input_central_lobe_fwhm'] = _lobe_width(omegas, stationary.input_spectrum, 'input')
        written.append(write_csv(frame, out_dir / f"stationary_{name}.csv"))
    return written, checks


def package_versions():
    from wgpulse import __version__

    return {'wgpulse': __version__, 'numpy': np.__version__, 'scipy': scipy.__version__,
            'pandas': pd.__version__}


def build_manifest(command, scenario: ScenarioConfig, runs, files: List[Path], out_dir: Path,
                   status='completed', error=None, extra=None):
    manifest = {
        'manifest_version': MANIFEST_VERSION,
        'command': command,
        'status': status,
        'config': scenario.resolved,
        'config_hash': make_hash(scenario.resolved),
        'csv_schema_version': SETTINGS.CSV.schema_version,
        'versions': package_versions(),
        'engines': {engine: run.residuals() for engine, run in runs.items()},
        'files': {str(path.relative_to(out_dir)): file_digest(path) for path in sorted(files)},
    }
    if error is not None:
        manifest['error'] = error
    if extra:
        manifest.update(extra)
    dump_json(manifest, out_dir / MANIFEST_NAME)
    return manifest


def _failure(e: EngineError, engine):
    return {'engine': engine, 'message': str(e), 'residuals': e.residuals}


def execute(command, scenario: ScenarioConfig, out_dir: Path, threads=1, spectra=False):
    """Run all engines of a scenario and write their outputs; on engine failure the manifest is still written."""
    runs, files, checks = {}, [], {}
    for engine in scenario.engines:
        try:
            runs.update(run_scenario(_only(scenario, engine)))
        except EngineError as e:
            build_manifest(command, scenario, runs, files, out_dir, status='failed', error=_failure(e, engine))
            raise
        files += write_engine_outputs(scenario, runs[engine], out_dir)
        if spectra and runs[engine].g1 is not None:
            written, checks[engine] = write_spectra(scenario, engine, runs[engine].g1, out_dir, threads)
            files += written
        if engine == 'mps' and scenario.checkpoint:
            files.append(save_checkpoint(runs[engine].final_state, out_dir / CHECKPOINT_NAME))

    extra = {}
    if len(runs) == 2:
        summary = diff_summary(runs)
        files.append(dump_json(summary, out_dir / DIFF_SUMMARY_NAME))
        logging.info(f"Max population difference between engines: {summary['population']['max_abs']:.3g}")
        extra['diff_summary'] = summary
    if spectra:
        if scenario.spectra['reference']:
            written, checks['free'] = write_spectra(scenario, 'free', g1_free(scenario.pulse, scenario.grid),
                                                    out_dir, threads, with_reference=False)
            files += written
        files.append(write_plot_script(out_dir, list(runs), _title(scenario)))
        extra['spectral_checks'] = checks
    manifest = build_manifest(command, scenario, runs, files, out_dir, extra=extra)
    logging.info(f"Wrote {len(files)} file{s_if(len(files))} and the run manifest to '{out_dir}'.")
    return manifest, runs


def _only(scenario: ScenarioConfig, engine):
    return replace(scenario, engines=(engine,))


def _title(scenario: ScenarioConfig):
    pulse = scenario.pulse
    length = f"gamma t_p = {pulse.t_p:g}" if pulse.t_p is not None else "sampled"
    return f"{scenario.params.kind}, {pulse.shape} {length}, n = {pulse.photons}"


def simulate(config, out=None, engine=None, threads=1):
    """
    Run a scenario config and write population/flux CSVs per engine.

    Parameters
    ----------
    config: str, Path or dict
        YAML scenario, a previous manifest.json, or an already loaded config dict.
    out: str, optional
        Output directory.
    engine: str, optional
        'analytic', 'mps' or 'both', overriding the config's engines block.
    threads: int
        Workers for the frequency columns of spectral outputs.

    Returns
    -------
    manifest: dict
    """
    scenario = _load(config, engine)
    out_dir = output_dir(out)
    spectra = any(scenario.outputs[k] for k in ['spectrum', 'intensity', 'stationary'])
    manifest, _ = execute('simulate', scenario, out_dir, threads=threads, spectra=spectra)
    return manifest


def spectra_job(config, out=None, engine=None, threads=1):
    """
    Spectral outputs for a g1-capable scenario: S(w, t), I(w, t), S(w) with |f(w)|^2, and a plot script.

    The spectrum, intensity and stationary outputs are switched on regardless of the config.
    With `spectra.reference` the pulse-only (no emitter) spectrogram is written as well.
    """
    scenario = _load(config, engine)
    outputs = dict(scenario.outputs, spectrum=True, intensity=True, stationary=True)
    resolved = dict(scenario.resolved, outputs=outputs)
    scenario = build_scenario(resolved)
    out_dir = output_dir(out)
    manifest, _ = execute('spectra', scenario, out_dir, threads=threads, spectra=True)
    return manifest


def _load(config, engine=None):
    if isinstance(config, dict):
        config_dict = config
    else:
        if config is None:
            raise ConfigError("No config file given (use --config).")
        config_dict = read_config(config)
    return build_scenario(config_dict, engine_override=engine)
