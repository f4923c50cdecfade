"""
Cross-checks between the engines, the closed forms and the exact identities of the model.

Every check yields a row {name, scenario, value, lower, upper, passed}; the report is written as
JSON and the run counts as failed if any row failed.
"""
import logging
from functools import partial
from multiprocessing import Pool
from pathlib import Path

import numpy as np
from tqdm.auto import tqdm

from wgpulse.analytic import (flux_chiral_rect, flux_general, g1_qrt, hierarchy_integrate,
                              pop_1photon_rect)
from wgpulse.config import build_scenario, read_config_set
from wgpulse.json import dump_json
from wgpulse.model import EmitterParams, PulseSpec, TimeGrid, envelope_spectrum
from wgpulse.mps_engine import TruncationPolicy, build_input, correlation_matrix, evolve
from wgpulse.settings import SETTINGS
from wgpulse.simulate import package_versions, output_dir, run_scenario
from wgpulse.spectra import (integrate_intensity, rms_relative_error, spectral_intensity,
                             stationary_from_engine, time_dependent_spectrum)
from wgpulse.utils import s_if, verbose_enabled

REPORT_NAME = "verify_report.json"
REFERENCE_T_P = 2.0
STATIONARY_RECT_T_P = (2.0, 10.0, 50.0)
STATIONARY_MAX_BINS = 2600


def _check(name, value, upper=None, lower=None, scenario=None):
    value = float(value)
    passed = bool(np.isfinite(value)
                  and (upper is None or value <= upper)
                  and (lower is None or value >= lower))
    if not passed:
        logging.warning(f"Check '{name}'{f' ({scenario})' if scenario else ''} failed: value {value:.6g}.")
    return {'name': name, 'scenario': scenario, 'value': value, 'lower': lower, 'upper': upper, 'passed': passed}


def cross_engine_tolerance(dt):
    """The collision model is first order in dt; the tolerance is quoted at dt = 0.005."""
    return SETTINGS.VERIFY.cross_engine_tolerance * max(1.0, dt / 0.005)


def scenario_name(resolved):
    pulse = resolved['pulse']
    length = f"tp{pulse['gamma_tp']:g}" if 'gamma_tp' in pulse else 'sampled'
    return f"{resolved['emitter']['kind']}-n{pulse['photons']}-{pulse['shape']}-{length}"


def scenario_checks(config):
    """Conservation per engine and the engine difference for one scenario config."""
    scenario = build_scenario(config)
    name = scenario_name(scenario.resolved)
    runs = run_scenario(scenario, progress=False)
    checks = [_check('conservation', run.record.final_residual(), SETTINGS.VERIFY.conservation_tolerance,
                     scenario=f"{name}/{engine}")
              for engine, run in runs.items()]
    if len(runs) == 2:
        difference = np.max(np.abs(runs['analytic'].record.n_TLS.values - runs['mps'].record.n_TLS.values))
        checks.append(_check('cross_engine_population', difference, cross_engine_tolerance(scenario.grid.dt),
                             scenario=name))
    return checks


def _reference_pulse():
    return PulseSpec.rect(REFERENCE_T_P)


def _reference_grid(dt):
    return TimeGrid.covering(REFERENCE_T_P + SETTINGS.GRID.tail, dt)


def factor_two_checks(dt, policy=None):
    """Symmetric single-photon population against half the chiral closed form, for both engines."""
    pulse, grid = _reference_pulse(), _reference_grid(dt)
    half_chiral = pop_1photon_rect('chiral', REFERENCE_T_P, grid.times) / 2
    symmetric = EmitterParams.symmetric()
    analytic = hierarchy_integrate(symmetric, pulse, grid).population().values
    record, _ = evolve(build_input(pulse, grid, channels=2), symmetric, grid, policy)
    return [
        _check('factor_two', np.max(np.abs(analytic - half_chiral)), SETTINGS.VERIFY.closed_form_tolerance,
               scenario='analytic'),
        _check('factor_two', np.max(np.abs(record.n_TLS.values - half_chiral)), cross_engine_tolerance(dt),
               scenario='mps'),
    ]


def flux_checks(dt):
    """Chiral transmitted flux against its closed form, and its time integral against one photon."""
    pulse, grid = _reference_pulse(), _reference_grid(dt)
    record = flux_general(EmitterParams.chiral(), pulse, grid)
    closed_form = flux_chiral_rect(REFERENCE_T_P, grid.times)
    emitted = record.N_R.values[-1] + record.N_L.values[-1]
    return [
        _check('flux_closed_form', np.max(np.abs(record.flux_R.values - closed_form)),
               SETTINGS.VERIFY.closed_form_tolerance),
        _check('flux_integral', abs(emitted - 1), SETTINGS.VERIFY.closed_form_tolerance),
    ]


def correlator_checks(dt, policy=None):
    """
    G1 diagonal against the flux for both engines, and the analytic against the MPS two-bin
    correlator over the full triangle.
    """
    pulse, grid = _reference_pulse(), _reference_grid(dt)
    params = EmitterParams.chiral()
    record, final_state = evolve(build_input(pulse, grid), params, grid, policy)
    g1_mps = correlation_matrix(final_state, grid)
    g1_analytic = g1_qrt(params, pulse, grid)
    flux = flux_general(params, pulse, grid).flux_R.values
    g1_centres = g1_qrt(params, pulse, grid, at_bin_centres=True)
    return [
        _check('g1_diagonal', np.max(np.abs(g1_analytic.diagonal - flux)), SETTINGS.VERIFY.diagonal_tolerance,
               scenario='analytic'),
        _check('g1_diagonal', np.max(np.abs(g1_mps.diagonal - record.flux_R.values)),
               SETTINGS.VERIFY.diagonal_tolerance, scenario='mps'),
        _check('cross_engine_g1', np.max(np.abs(g1_centres.data - g1_mps.data)), cross_engine_tolerance(dt)),
    ]


def spectral_checks(dt, omegas):
    """Long-time and intensity identities, the symmetric on-resonance dip and the sign of S(w, t)."""
    pulse, grid = _reference_pulse(), _reference_grid(dt)
    tolerance = SETTINGS.VERIFY.spectral_rms_tolerance
    checks = []

    pulses = [(f"rect-tp{t_p:g}", PulseSpec.rect(t_p)) for t_p in STATIONARY_RECT_T_P]
    pulses.append(('gaussian', PulseSpec.gaussian(3.0, 1.0)))
    for label, chiral_pulse in pulses:
        t_end = chiral_pulse.support_end + SETTINGS.GRID.tail
        # at most STATIONARY_MAX_BINS bins per G1 matrix
        chiral_grid = TimeGrid.covering(t_end, max(dt, t_end / STATIONARY_MAX_BINS))
        g1 = g1_qrt(EmitterParams.chiral(), chiral_pulse, chiral_grid)
        stationary = stationary_from_engine(g1, omegas)
        checks.append(_check('stationary_identity',
                             rms_relative_error(stationary.spectrum, envelope_spectrum(chiral_pulse, omegas)),
                             tolerance, scenario=f"chiral/{label}"))

    g1 = g1_qrt(EmitterParams.chiral(), pulse, grid)
    S = time_dependent_spectrum(g1, omegas)
    intensity = spectral_intensity(g1, omegas)
    checks.append(_check('intensity_identity', rms_relative_error(integrate_intensity(intensity), S.final),
                         tolerance, scenario='chiral/rect'))
    scale = np.max(S.data)
    checks.append(_check('spectrum_nonnegative', -np.min(S.data) / scale, 1e-6, scenario='C1+C2+C3+C4'))
    partial_kernel = g1_qrt(EmitterParams.chiral(), pulse, grid, terms=('C1', 'C2', 'C3'))
    S_partial = time_dependent_spectrum(partial_kernel, omegas)
    checks.append(_check('spectrum_negative_without_c4', np.min(S_partial.data) / scale, -0.05,
                         scenario='C1+C2+C3'))

    symmetric = stationary_from_engine(g1_qrt(EmitterParams.symmetric(), pulse, grid), omegas)
    on_resonance = int(np.argmin(np.abs(omegas)))
    checks.append(_check('symmetric_dip', abs(symmetric.spectrum[on_resonance]) / np.max(symmetric.spectrum),
                         1e-3, scenario='symmetric/rect'))
    return checks


def convergence_error(dt, policy=None):
    """Max deviation of the MPS chiral population from the closed form on a grid of step dt."""
    pulse, grid = _reference_pulse(), _reference_grid(dt)
    record, _ = evolve(build_input(pulse, grid), EmitterParams.chiral(), grid, policy)
    return float(np.max(np.abs(record.n_TLS.values - pop_1photon_rect('chiral', REFERENCE_T_P, grid.times))))


def convergence_checks(dts, policy=None):
    coarse, fine = dts
    errors = [convergence_error(dt, policy) for dt in dts]
    lower, upper = SETTINGS.VERIFY.convergence_ratio
    checks = [_check('convergence_order', errors[0] / errors[1], upper=upper, lower=lower,
                     scenario=f"dt {coarse:g} -> {fine:g}")]
    checks[0]['errors'] = errors
    return checks


def verify(config_set=None, out=None, threads=1):
    """
    Run the verification suite and write the report.

    Parameters
    ----------
    config_set: str or Path, optional
        YAML config set with `fixed` and `grid` blocks; defaults to the bundled suite.
    out: str, optional
        Output directory.
    threads: int
        Worker processes for the suite scenarios.

    Returns
    -------
    report: dict
        With `passed` (bool) and one row per check.
    """
    config_set = SETTINGS.VERIFY.suite if config_set is None else Path(config_set)
    configs = read_config_set(config_set)
    dt = SETTINGS.VERIFY.gamma_dt
    omegas = np.linspace(SETTINGS.SPECTRA_DEFAULT.omega_min, SETTINGS.SPECTRA_DEFAULT.omega_max,
                         SETTINGS.VERIFY.n_omega)
    policy = TruncationPolicy()

    checks = []
    progress = dict(total=len(configs), disable=not verbose_enabled(), desc="Verifying scenarios")
    if threads > 1 and len(configs) > 1:
        with Pool(min(threads, len(configs))) as pool:
            for rows in tqdm(pool.imap(scenario_checks, configs), **progress):
                checks += rows
    else:
        for config in tqdm(configs, **progress):
            checks += scenario_checks(config)

    global_checks = [partial(factor_two_checks, dt, policy), partial(flux_checks, dt),
                     partial(correlator_checks, dt, policy), partial(spectral_checks, dt, omegas),
                     partial(convergence_checks, SETTINGS.VERIFY.convergence_dt, policy)]
    for run_checks in tqdm(global_checks, disable=not verbose_enabled(), desc="Verifying identities"):
        checks += run_checks()

    failed = [c for c in checks if not c['passed']]
    report = {
        'passed': not failed,
        'n_checks': len(checks),
        'n_failed': len(failed),
        'suite': str(config_set),
        'gamma_dt': dt,
        'versions': package_versions(),
        'checks': checks,
    }
    path = dump_json(report, output_dir(out) / REPORT_NAME)
    if failed:
        logging.error(f"{len(failed)} of {len(checks)} check{s_if(len(checks))} failed, see '{path}'.")
    else:
        logging.info(f"All {len(checks)} checks passed, report written to '{path}'.")
    return report
