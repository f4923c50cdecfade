"""
Closed-form and ODE-hierarchy engine for a two-level emitter driven by a 1- or 2-photon pulse.

The hierarchy is integrated on resonance only. For k = 1..n photons

    dn_k/dt = -gamma n_k - sqrt(k gamma_R) 2 Re(f* s_k)
    ds_k/dt = -gamma/2 s_k - sqrt(k gamma_R) f (1 - 2 n_{k-1}),    n_0 = 0

with n_k = <k,g| s+ s- |k,g> and s_k = <k-1,g| s- |k,g>.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import optimize

from wgpulse.model import (EmitterParams, G1Matrix, PulseSpec, TimeGrid, TimeSeries,
                           envelope, envelope_spectrum)

__all__ = ("HierarchyState", "EmissionRecord", "pop_1photon_rect", "coherence_1photon_rect",
           "hierarchy_integrate", "pop_2photon_rect", "flux_chiral_rect", "flux_general",
           "g1_chiral_rect", "g1_qrt", "g1_free", "stationary_spectrum", "peak_1photon_rect",
           "optimal_rect_pulse", "G1_TERMS")

G1_TERMS = ('C1', 'C2', 'C3', 'C4')

# RK4 stage times are kept this far (relative to dt) inside each step, so that envelope jumps
# sitting on grid points are seen from the correct side.
_STAGE_INSET = 1e-9

_KIND_FACTOR = {'chiral': 1.0, 'symmetric': 0.5}


@dataclass(frozen=True, eq=False)
class HierarchyState:
    """History of the hierarchy on a time grid; row k-1 holds n_k / s_k."""
    grid: TimeGrid
    populations: np.ndarray
    coherences: np.ndarray
    N_R: np.ndarray
    N_L: np.ndarray

    @property
    def photons(self):
        return self.populations.shape[0]

    def population(self, k=None):
        """n_k(t) as a TimeSeries, by default for the full photon number."""
        k = self.photons if k is None else k
        return TimeSeries(self.grid, self.populations[k - 1], label=f"n_{k}")

    def coherence(self, k=None):
        k = self.photons if k is None else k
        return TimeSeries(self.grid, self.coherences[k - 1], label=f"s_{k}")


@dataclass(frozen=True, eq=False)
class EmissionRecord:
    """Emitter population and transmitted/reflected flux with their cumulative photon counts."""
    n_TLS: TimeSeries
    flux_R: TimeSeries
    flux_L: TimeSeries
    N_R: TimeSeries
    N_L: TimeSeries
    photons: int
    engine: str = 'analytic'

    @property
    def grid(self):
        return self.n_TLS.grid

    def excitations(self):
        """Emitted plus stored excitations, N_R + N_L + n_TLS, at every grid time."""
        return self.N_R.values + self.N_L.values + self.n_TLS.values

    def final_residual(self):
        """Deviation of the excitation number from the photon number once the pulse has passed."""
        return float(abs(self.excitations()[-1] - self.photons))


def _check_kind(kind):
    if kind not in _KIND_FACTOR:
        raise ValueError(f"Unknown emitter kind '{kind}', expected one of {list(_KIND_FACTOR)}.")


def _check_pulse_length(t_p):
    if not t_p > 0:
        raise ValueError(f"Pulse length must be positive, got t_p={t_p}.")


def _as_times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("Times must be nonnegative.")
    return t


def _scalar_or_array(x):
    return x if np.ndim(x) else x[()]


def pop_1photon_rect(kind, t_p, t, gamma=1.0):
    """
    Emitter population for a single-photon rectangular pulse.

    Parameters
    ----------
    kind: str
        'chiral' or 'symmetric'. The symmetric population is exactly half the chiral one.
    t_p: float
        Pulse length.
    t: float or np.ndarray
        Times (nonnegative).
    gamma: float
        Total decay rate.

    Returns
    -------
    Population at the requested times.
    """
    _check_kind(kind)
    _check_pulse_length(t_p)
    t = _as_times(t)
    prefactor = 4 / (gamma * t_p)
    during = prefactor * (np.exp(-gamma * t / 2) - 1) ** 2
    after = prefactor * (np.exp(gamma * t_p / 2) - 1) ** 2 * np.exp(-gamma * t)
    return _scalar_or_array(_KIND_FACTOR[kind] * np.where(t <= t_p, during, after))


def coherence_1photon_rect(kind, t_p, t, gamma=1.0):
    """Coherence <0,g| s-(t) |1,g> for a single-photon rectangular pulse, decaying freely after t_p."""
    _check_kind(kind)
    _check_pulse_length(t_p)
    t = _as_times(t)
    prefactor = 2 / math.sqrt(gamma * t_p) * math.sqrt(_KIND_FACTOR[kind])
    during = prefactor * (np.exp(-gamma * np.minimum(t, t_p) / 2) - 1)
    decay = np.exp(-gamma * np.maximum(t - t_p, 0) / 2)
    return _scalar_or_array((during * decay).astype(complex))


def peak_1photon_rect(kind, t_p, gamma=1.0):
    """Maximum of the single-photon population, reached at the end of the pulse."""
    return float(pop_1photon_rect(kind, t_p, t_p, gamma=gamma))


def optimal_rect_pulse(kind='chiral', gamma=1.0, bounds=(0.05, 50.0)):
    """
    Rectangular pulse length that maximizes the single-photon emitter population.

    Returns
    -------
    (t_p, peak): tuple of floats
    """
    result = optimize.minimize_scalar(lambda x: -peak_1photon_rect(kind, x, gamma=gamma),
                                      bounds=bounds, method='bounded', options={'xatol': 1e-10})
    return float(result.x), float(-result.fun)


def _population_drive(f, s, couplings):
    return -2 * couplings * np.real(np.conj(f) * s)


def _hierarchy_rhs(y, f, gamma, gamma_R, gamma_L, couplings):
    """Time derivative of [n_1..n_P, s_1..s_P, N_R, N_L]."""
    photons = len(couplings)
    n = y[:photons]
    s = y[photons:2 * photons]
    n_lower = np.concatenate(([0.0], n[:-1].real))

    dn = -gamma * n + _population_drive(f, s, couplings)
    ds = -gamma / 2 * s - couplings * f * (1 - 2 * n_lower)
    flux_R = photons * abs(f) ** 2 + 2 * couplings[-1] * np.real(np.conj(f) * s[-1]) + gamma_R * n[-1].real
    flux_L = gamma_L * n[-1].real
    return np.concatenate((dn, ds, [flux_R, flux_L]))


def hierarchy_integrate(params: EmitterParams, pulse: PulseSpec, grid: TimeGrid):
    """
    Integrate the population/coherence hierarchy with fixed-step RK4 on the grid.

    The transmitted and reflected photon numbers N_R, N_L are integrated in the same RK4 step,
    so they inherit its accuracy across envelope jumps.

    Parameters
    ----------
    params: EmitterParams
        Must be on resonance (delta = 0).
    pulse: PulseSpec
        1- or 2-photon pulse.
    grid: TimeGrid

    Returns
    -------
    HierarchyState with values at every grid time t_k = (k+1) dt.
    """
    if params.delta != 0:
        raise ValueError("The population hierarchy is only available on resonance (delta = 0).")
    if pulse.photons not in (1, 2):
        raise ValueError(f"Unsupported photon number {pulse.photons}.")

    photons = pulse.photons
    dt = grid.dt
    couplings = np.sqrt(np.arange(1, photons + 1) * params.gamma_R)
    starts = grid.times - dt
    f_start = envelope(pulse, starts + _STAGE_INSET * dt)
    f_mid = envelope(pulse, starts + dt / 2)
    f_end = envelope(pulse, starts + (1 - _STAGE_INSET) * dt)

    gamma, gamma_R, gamma_L = params.gamma, params.gamma_R, params.gamma_L
    y = np.zeros(2 * photons + 2, dtype=complex)
    history = np.empty((grid.n_steps, y.size), dtype=complex)
    for k in range(grid.n_steps):
        k1 = _hierarchy_rhs(y, f_start[k], gamma, gamma_R, gamma_L, couplings)
        k2 = _hierarchy_rhs(y + dt / 2 * k1, f_mid[k], gamma, gamma_R, gamma_L, couplings)
        k3 = _hierarchy_rhs(y + dt / 2 * k2, f_mid[k], gamma, gamma_R, gamma_L, couplings)
        k4 = _hierarchy_rhs(y + dt * k3, f_end[k], gamma, gamma_R, gamma_L, couplings)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        history[k] = y

    logging.verbose(f"Integrated the {photons}-photon hierarchy over {grid.n_steps} steps (dt={dt}).")
    return HierarchyState(grid=grid,
                          populations=history[:, :photons].real.T.copy(),
                          coherences=history[:, photons:2 * photons].T.copy(),
                          N_R=history[:, -2].real.copy(),
                          N_L=history[:, -1].real.copy())


def pop_2photon_rect(kind, t_p, t, gamma=1.0, dt=0.005):
    """
    Emitter population for a two-photon rectangular pulse, from the hierarchy.

    The hierarchy runs on a grid whose step divides t_p; values between grid points are
    linearly interpolated.
    """
    _check_kind(kind)
    _check_pulse_length(t_p)
    t = _as_times(t)
    t_max = float(np.max(t)) if t.size else 0.0
    if t_max == 0:
        return _scalar_or_array(np.zeros_like(t))
    step = t_p / math.ceil(t_p / dt)
    grid = TimeGrid.covering(t_max, step)
    params = EmitterParams.from_kind(kind, gamma=gamma)
    state = hierarchy_integrate(params, PulseSpec.rect(t_p, photons=2), grid)
    times = np.concatenate(([0.0], grid.times))
    values = np.concatenate(([0.0], state.populations[1]))
    return _scalar_or_array(np.interp(t, times, values))


def flux_chiral_rect(t_p, t, gamma=1.0):
    """Transmitted flux of a chiral emitter driven by a single-photon rectangular pulse."""
    _check_pulse_length(t_p)
    t = _as_times(t)
    decay = np.exp(-gamma * t / 2) - 1
    during = 1 / t_p + 4 / t_p * decay + 4 / t_p * decay ** 2
    after = 4 / t_p * (np.exp(gamma * t_p / 2) - 1) ** 2 * np.exp(-gamma * t)
    return _scalar_or_array(np.where(t <= t_p, during, after))


def flux_general(params: EmitterParams, pulse: PulseSpec, grid: TimeGrid):
    """
    Transmitted and reflected flux for an arbitrary normalized envelope.

    flux_R = n|f|^2 + 2 sqrt(n gamma_R) Re(f* s_n) + gamma_R n_n and flux_L = gamma_L n_n for a
    right-moving n-photon input; their sum equals n|f|^2 - dn_n/dt.

    Returns
    -------
    EmissionRecord
    """
    state = hierarchy_integrate(params, pulse, grid)
    photons = pulse.photons
    f = envelope(pulse, grid.times)
    n = state.populations[-1]
    s = state.coherences[-1]
    coupling = math.sqrt(photons * params.gamma_R)
    flux_R = photons * f ** 2 + 2 * coupling * np.real(f * s) + params.gamma_R * n
    flux_L = params.gamma_L * n
    return EmissionRecord(n_TLS=TimeSeries(grid, n, 'n_tls'),
                          flux_R=TimeSeries(grid, flux_R, 'flux_R'),
                          flux_L=TimeSeries(grid, flux_L, 'flux_L'),
                          N_R=TimeSeries(grid, state.N_R, 'N_R'),
                          N_L=TimeSeries(grid, state.N_L, 'N_L'),
                          photons=photons,
                          engine='analytic')


def _check_terms(terms):
    terms = tuple(terms)
    unknown = set(terms) - set(G1_TERMS)
    if unknown:
        raise ValueError(f"Unknown G1 terms {sorted(unknown)}, expected a subset of {G1_TERMS}.")
    return terms


def g1_chiral_rect(t_p, t, tau, gamma=1.0, terms: Iterable[str] = G1_TERMS):
    """
    Closed-form G1(t, t + tau) for a chiral emitter and a single-photon rectangular pulse.

    Sum of the four contributions C1 (pulse), C2/C3 (pulse-emitter interference) and C4
    (emitter), piecewise on {t <= t_p, t + tau <= t_p}, {t <= t_p < t + tau} and {t > t_p}.
    """
    _check_pulse_length(t_p)
    terms = _check_terms(terms)
    t = _as_times(t)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("Correlation delay tau must be nonnegative.")
    t, tau = np.broadcast_arrays(gamma * t, gamma * tau)
    x = gamma * t_p

    region1 = t + tau <= x
    region2 = (t <= x) & ~region1
    parts = {
        'C1': np.where(region1, 1 / x, 0.0),
        'C2': np.where(region1, 2 / x * (np.exp(-(t + tau) / 2) - 1),
                       np.where(region2, 2 / x * (1 - np.exp(x / 2)) * np.exp(-(t + tau) / 2), 0.0)),
        'C3': np.where(region1, 2 / x * (np.exp(-t / 2) - 1), 0.0),
        'C4': np.where(region1,
                       4 / x * (1 - np.exp(-t / 2) + np.exp(-(t + tau / 2)) - np.exp(-(t + tau) / 2)),
                       np.where(region2,
                                4 / x * np.exp(-tau / 2) * (-np.exp(x / 2 - t) + np.exp((x - t) / 2)
                                                            + np.exp(-t) - np.exp(-t / 2)),
                                4 / x * (np.exp(x / 2) - 1) ** 2 * np.exp(-(t + tau / 2)))),
    }
    total = gamma * sum(parts[term] for term in terms)
    return _scalar_or_array(np.asarray(total, dtype=complex))


def _shifted_rows(values):
    """(N, N) read-only view whose row i is values[i:], zero-padded at the end."""
    n = len(values)
    padded = np.concatenate((values, np.zeros(n - 1, dtype=values.dtype)))
    return np.lib.stride_tricks.sliding_window_view(padded, n)


def g1_qrt(params: EmitterParams, pulse: PulseSpec, grid: TimeGrid, terms: Iterable[str] = G1_TERMS,
           at_bin_centres=False):
    """
    G1 matrix for a single-photon pulse of arbitrary envelope via the quantum regression theorem.

    With s(t) the coherence and n(t) the population from the hierarchy,

        C1 = f(t) f(t+tau)                C2 = sqrt(gamma_R) f(t) s(t+tau)
        C3 = sqrt(gamma_R) s*(t) f(t+tau)  C4 = gamma_R [(n(t) - |s(t)|^2) e^{-gamma tau/2} + s*(t) s(t+tau)]

    C4 is the solution of the regression equation for <s+(t) s-(t+tau)> started from n(t).
    Since t_i + tau_j = t_{i+j} on the grid, all terms are products of grid series.

    Parameters
    ----------
    terms: iterable of str
        Subset of ('C1', 'C2', 'C3', 'C4') to include.
    at_bin_centres: bool
        Sample t at the bin centres t_i - dt/2 instead of t_i (tau stays j dt). The hierarchy then
        runs on the half-step grid. Time-bin engines report bin integrals, which this matches.
    """
    if pulse.photons != 1:
        raise ValueError("The regression engine only covers single-photon pulses; use the MPS engine for n=2.")
    terms = _check_terms(terms)
    if at_bin_centres:
        state = hierarchy_integrate(params, pulse, grid.refined(2))
        times = grid.times - grid.dt / 2
        s, n = state.coherences[0, 0::2], state.populations[0, 0::2]
    else:
        state = hierarchy_integrate(params, pulse, grid)
        times = grid.times
        s, n = state.coherences[0], state.populations[0]
    f = envelope(pulse, times).astype(complex)
    s = math.sqrt(params.gamma_R) * s
    n = params.gamma_R * n

    pairs = {'C1': (f, f), 'C2': (f, s), 'C3': (s, f), 'C4': (s, s)}
    data = np.zeros((grid.n_steps, grid.n_steps), dtype=complex)
    for term in terms:
        left, right = pairs[term]
        data += np.conj(left)[:, None] * _shifted_rows(right)
    if 'C4' in terms:
        taus = np.arange(grid.n_steps) * grid.dt
        data += np.outer(n - np.abs(s) ** 2, np.exp(-params.gamma * taus / 2))
    return G1Matrix(grid=grid, data=data)


def g1_free(pulse: PulseSpec, grid: TimeGrid):
    """Pulse-only correlation n f(t) f(t+tau), i.e. the field without an emitter."""
    f = envelope(pulse, grid.times).astype(complex)
    return G1Matrix(grid=grid, data=pulse.photons * f[:, None] * _shifted_rows(f))


def stationary_spectrum(params: EmitterParams, pulse: PulseSpec, omega):
    """
    Long-time transmitted spectrum for a single-photon pulse.

    |f(w)|^2 times the transmission |1 - gamma_R / (gamma/2 - i(w - delta))|^2, which is one for
    a chiral emitter and 1 - (gamma^2/4) / ((w - delta)^2 + gamma^2/4) for a symmetric one.
    """
    if pulse.photons != 1:
        raise ValueError("The stationary spectrum is only available in closed form for single photons.")
    omega = np.asarray(omega, dtype=float)
    transmission = np.abs(1 - params.gamma_R / (params.gamma / 2 - 1j * (omega - params.delta))) ** 2
    return _scalar_or_array(envelope_spectrum(pulse, omega) * transmission)
