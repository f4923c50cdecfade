"""
Peak emitter population versus rectangular pulse length, for one and two photons.
"""
import logging
import math
from functools import partial
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from wgpulse.analytic import hierarchy_integrate, peak_1photon_rect
from wgpulse.errors import ArgumentError, EngineError
from wgpulse.model import EmitterParams, PulseSpec, TimeGrid
from wgpulse.mps_engine import TruncationPolicy, build_input, evolve
from wgpulse.settings import SETTINGS
from wgpulse.simulate import output_dir, write_csv
from wgpulse.utils import s_if, verbose_enabled

SWEEP_COLUMNS = ['gamma_tp', 'peak_n1', 'peak_n2', 'R21', 'wea_deviation', 'status']
SWEEP_CSV_NAME = "sweep_peak_population.csv"


def _aligned_grid(t_p, dt, tail):
    """Grid whose step divides t_p, no coarser than `dt`, reaching t_p + tail."""
    step = t_p / math.ceil(t_p / dt - 1e-9)
    return TimeGrid.covering(t_p + tail, step)


def peak_population(kind, photons, t_p, engine='analytic', dt=None, policy: TruncationPolicy = None):
    """
    Maximum of n_TLS(t) over the time grid for a rectangular Fock pulse of length t_p.

    The analytic engine uses the closed form for one photon and the hierarchy for two.
    """
    dt = SETTINGS.GRID.gamma_dt if dt is None else dt
    params = EmitterParams.from_kind(kind)
    if engine == 'analytic' and photons == 1:
        return peak_1photon_rect(kind, t_p)
    pulse = PulseSpec.rect(t_p, photons=photons)
    grid = _aligned_grid(t_p, dt, SETTINGS.SWEEP.tail)
    if engine == 'analytic':
        return float(np.max(hierarchy_integrate(params, pulse, grid).population().values))
    record, _ = evolve(build_input(pulse, grid, channels=params.channels), params, grid, policy)
    return float(np.max(record.n_TLS.values))


def _sweep_point(t_p, kind, photons, engine, dt, policy):
    row = {'gamma_tp': t_p, 'peak_n1': np.nan, 'peak_n2': np.nan, 'status': 'ok'}
    try:
        for n in photons:
            row[f'peak_n{n}'] = peak_population(kind, n, t_p, engine=engine, dt=dt, policy=policy)
    except (EngineError, ValueError) as e:
        row['status'] = f"failed: {e}"
    return row


def sweep_peak_population(kind, photons, tp_list, engine='analytic', dt=None, policy=None, threads=1):
    """
    Peak population for every pulse length, with R21 = peak_n2 / peak_n1 when both photon
    numbers run. A linear (harmonic) scatterer would give R21 = 2; `wea_deviation` = 1 - R21/2.

    Parameters
    ----------
    kind: str
        'chiral' or 'symmetric'.
    photons: int or list of int
    tp_list: list of float
        Pulse lengths gamma t_p, nonempty and positive.
    engine: str
        'analytic' or 'mps'.
    threads: int
        Worker processes.

    Returns
    -------
    pd.DataFrame with SWEEP_COLUMNS; failed points keep NaN peaks and carry the error in `status`.
    """
    photons = [photons] if isinstance(photons, int) else list(photons)
    if not photons or any(n not in SETTINGS.PHOTON_NUMBERS for n in photons):
        raise ArgumentError(f"Photon numbers must be taken from {SETTINGS.PHOTON_NUMBERS}, got {photons}.")
    tp_list = [float(t_p) for t_p in tp_list]
    if not tp_list or any(not t_p > 0 for t_p in tp_list):
        raise ArgumentError(f"Pulse lengths must be a nonempty list of positive numbers, got {tp_list}.")
    if kind not in SETTINGS.EMITTER_KINDS:
        raise ArgumentError(f"Emitter kind must be one of {SETTINGS.EMITTER_KINDS}, got '{kind}'.")
    if engine not in SETTINGS.ENGINES:
        raise ArgumentError(f"Sweeps run a single engine from {SETTINGS.ENGINES}, got '{engine}'.")

    worker = partial(_sweep_point, kind=kind, photons=photons, engine=engine, dt=dt, policy=policy)
    progress = dict(total=len(tp_list), disable=not verbose_enabled(), desc="Sweeping pulse lengths")
    if threads > 1 and len(tp_list) > 1:
        with Pool(min(threads, len(tp_list))) as pool:
            rows = list(tqdm(pool.imap(worker, tp_list), **progress))
    else:
        rows = [worker(t_p) for t_p in tqdm(tp_list, **progress)]

    frame = pd.DataFrame(rows)
    frame['R21'] = frame['peak_n2'] / frame['peak_n1']
    frame['wea_deviation'] = 1 - frame['R21'] / 2
    failed = int((frame['status'] != 'ok').sum())
    if failed:
        logging.warning(f"{failed} of {len(frame)} sweep point{s_if(len(frame))} failed.")
    return frame[SWEEP_COLUMNS]


def run_sweep(kind='chiral', photons=(1, 2), tp_list=None, engine='analytic', dt=None, out=None, threads=1):
    """Run a sweep and write it as CSV to the output directory."""
    if tp_list is None:
        tp_list = SETTINGS.SWEEP.tp_list
    frame = sweep_peak_population(kind, photons, tp_list, engine=engine, dt=dt, threads=threads)
    path = write_csv(frame, Path(output_dir(out)) / SWEEP_CSV_NAME)
    logging.info(f"Wrote {len(frame)} sweep row{s_if(len(frame))} to '{path}'.")
    return frame
