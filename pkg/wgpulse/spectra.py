"""
Time-dependent spectra from a G1 matrix.

    S(w, t) = (1/pi) Re int_0^t dt' int_0^{t-t'} dtau G1(t', t'+tau) e^{i w tau}
    I(w, t) = (1/pi) Re int_0^inf dtau G1(t, t+tau) e^{i w tau}

w is the offset from the pulse carrier. With the 1/pi prefactor S(w, t -> inf) is a spectral
density whose integral over w is the photon number. Both integrals use the trapezoid rule on
the G1 grid; the t' = 0 row of the kernel is zero.
"""
import logging
import math
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import Optional

import numpy as np
from scipy import integrate

from wgpulse.analytic import stationary_spectrum
from wgpulse.model import EmitterParams, G1Matrix, PulseSpec, envelope_spectrum
from wgpulse.settings import SETTINGS

__all__ = ("SpectrogramGrid", "StationarySpectrum", "frequency_grid", "time_dependent_spectrum",
           "spectral_intensity", "integrate_intensity", "stationary_from_engine", "central_lobe_fwhm",
           "rms_relative_error")


@dataclass(frozen=True, eq=False)
class SpectrogramGrid:
    """Real spectrogram data[time index, frequency index]."""
    omegas: np.ndarray
    times: np.ndarray
    data: np.ndarray
    label: str = ''

    def __post_init__(self):
        if self.data.shape != (len(self.times), len(self.omegas)):
            raise ValueError(f"Spectrogram '{self.label}' has shape {self.data.shape}, "
                             f"expected ({len(self.times)}, {len(self.omegas)}).")
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"Spectrogram '{self.label}' contains non-finite values.")

    @property
    def final(self):
        return self.data[-1]


@dataclass(frozen=True, eq=False)
class StationarySpectrum:
    omegas: np.ndarray
    spectrum: np.ndarray
    reference: Optional[np.ndarray] = None
    input_spectrum: Optional[np.ndarray] = None

    @property
    def rms_error(self):
        """RMS deviation from the closed form, relative to its peak (None without a closed form)."""
        if self.reference is None:
            return None
        return rms_relative_error(self.spectrum, self.reference)


def frequency_grid(omega_min=None, omega_max=None, n_omega=None):
    defaults = SETTINGS.SPECTRA_DEFAULT
    return np.linspace(defaults.omega_min if omega_min is None else omega_min,
                       defaults.omega_max if omega_max is None else omega_max,
                       defaults.n_omega if n_omega is None else n_omega)


def _check_inputs(g1, omegas):
    if not isinstance(g1, G1Matrix):
        raise ValueError(f"Expected a G1Matrix, got {type(g1)}.")
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or omegas.size == 0 or not np.all(np.isfinite(omegas)):
        raise ValueError("Frequencies must be a nonempty one-dimensional array of finite values.")
    return omegas


def _phases(n, dt, omegas):
    return np.exp(1j * np.multiply.outer(np.arange(n) * dt, omegas))


def _project(matrix, dt, omegas, threads=1):
    """matrix @ phases, with the frequency columns split over `threads` workers."""
    n = matrix.shape[1]
    chunks = np.array_split(omegas, max(1, min(int(threads), omegas.size)))
    if len(chunks) == 1:
        return matrix @ _phases(n, dt, omegas)
    with ThreadPool(len(chunks)) as pool:
        parts = pool.map(lambda chunk: matrix @ _phases(n, dt, chunk), chunks)
    return np.concatenate(parts, axis=1)


def _padded_kernel(g1):
    """(N+1, N+1) kernel with a zero row for t' = 0: padded[p, j] = G1(t_p, t_p + tau_j)."""
    n = g1.grid.n_steps
    padded = np.zeros((n + 1, n + 1), dtype=complex)
    padded[1:, :n] = g1.data
    return padded


def time_dependent_spectrum(g1: G1Matrix, omegas, stride=1, threads=1):
    """
    Cumulative spectrum S(w, t) on the times 0, dt, ..., N dt (every `stride`-th, last always kept).

    The kernel is regrouped by anti-diagonals t' + tau = M dt, so that a single matrix product
    yields A[M, w] = sum_{p + j = M} G[p, j] e^{i w tau_j}; the strip between the anti-diagonals
    M-1 and M then adds dt^2/2 (A[M-1] + A[M] - (D[M-1] + D[M])/2), D being the tau = 0 entries.
    That product is O(N^2 N_w) work done by BLAS; the cumulative sum over M adds O(N N_w).
    """
    omegas = _check_inputs(g1, omegas)
    n, dt = g1.grid.n_steps, g1.grid.dt
    padded = _padded_kernel(g1)

    antidiagonals = np.zeros_like(padded)
    for j in range(n + 1):
        antidiagonals[j:, j] = padded[:n + 1 - j, j]
    A = _project(antidiagonals, dt, omegas, threads)
    D = padded[:, 0][:, None]

    increments = dt ** 2 / 2 * (A[:-1] + A[1:] - (D[:-1] + D[1:]) / 2)
    S = np.concatenate((np.zeros((1, omegas.size)), np.cumsum(increments.real, axis=0))) / math.pi

    times = np.arange(n + 1) * dt
    rows = np.unique(np.append(np.arange(0, n + 1, stride), n))
    logging.verbose(f"Computed S(w, t) on {n + 1} times x {omegas.size} frequencies.")
    return SpectrogramGrid(omegas=omegas, times=times[rows], data=S[rows], label='S')


def spectral_intensity(g1: G1Matrix, omegas, stride=1, threads=1):
    """Spectral intensity I(w, t_i) at the grid times (every `stride`-th, last always kept)."""
    omegas = _check_inputs(g1, omegas)
    n, dt = g1.grid.n_steps, g1.grid.dt
    weights = G1Matrix.triangle_mask(n).astype(float)
    weights[:, 0] = 0.5
    rows = np.arange(n)
    weights[rows, n - 1 - rows] = 0.5
    weights[-1] = 0
    I = _project(g1.data * weights, dt, omegas, threads)
    I = dt * I.real / math.pi

    keep = np.unique(np.append(np.arange(0, n, stride), n - 1))
    return SpectrogramGrid(omegas=omegas, times=g1.grid.times[keep], data=I[keep], label='I')


def integrate_intensity(intensity: SpectrogramGrid):
    """Trapezoid integral of I(w, t) over t, with I(w, 0) = 0; needs the unstrided intensity."""
    times = np.concatenate(([0.0], intensity.times))
    values = np.concatenate((np.zeros((1, intensity.omegas.size)), intensity.data))
    return integrate.trapezoid(values, times, axis=0)


def _final_spectrum(g1, omegas):
    """S(w, t_N) without building the anti-diagonal matrix."""
    n, dt = g1.grid.n_steps, g1.grid.dt
    padded = _padded_kernel(g1)
    phases = _phases(n + 1, dt, omegas)
    total = padded.sum(axis=0) @ phases
    p = np.arange(n + 1)
    last = (padded[p, n - p] * phases[n - p].T).sum(axis=1)
    diagonal = padded[:, 0].sum() - padded[n, 0] / 2
    return (dt ** 2 / 2 * (2 * total - last - diagonal)).real / math.pi


def stationary_from_engine(g1: G1Matrix, omegas, params: EmitterParams = None, pulse: PulseSpec = None):
    """
    Long-time spectrum S(w) = S(w, t_end) of an engine's G1 matrix.

    If a single-photon pulse and the emitter are given, the closed-form stationary spectrum is
    attached as reference; the input spectrum |f(w)|^2 is attached whenever the pulse is given.
    """
    omegas = _check_inputs(g1, omegas)
    spectrum = _final_spectrum(g1, omegas)
    reference = input_spectrum = None
    if pulse is not None:
        input_spectrum = envelope_spectrum(pulse, omegas)
        if params is not None and pulse.photons == 1:
            reference = stationary_spectrum(params, pulse, omegas)
    return StationarySpectrum(omegas=omegas, spectrum=spectrum, reference=reference,
                              input_spectrum=input_spectrum)


def rms_relative_error(values, reference):
    """Root-mean-square deviation, relative to the peak magnitude of the reference."""
    values, reference = np.asarray(values), np.asarray(reference)
    scale = np.max(np.abs(reference))
    if scale == 0:
        return float(np.sqrt(np.mean(np.abs(values) ** 2)))
    return float(np.sqrt(np.mean(np.abs(values - reference) ** 2)) / scale)


def central_lobe_fwhm(omegas, spectrum, center=0.0):
    """
    Width of the lobe containing `center` at half the global maximum, linearly interpolated.

    Raises ValueError if the spectrum at `center` is already below half maximum, e.g. when the
    spectrum has a dip there, or if the lobe reaches the edge of the grid.
    """
    omegas, spectrum = np.asarray(omegas), np.asarray(spectrum)
    start = int(np.argmin(np.abs(omegas - center)))
    half = np.max(spectrum) / 2
    if spectrum[start] <= half:
        raise ValueError(f"The spectrum at w = {omegas[start]:g} lies below half maximum, there is no central lobe.")

    def crossing(step):
        k = start
        while 0 <= k + step < len(spectrum) and spectrum[k + step] > half:
            k += step
        if not 0 <= k + step < len(spectrum):
            raise ValueError("The spectrum does not fall to half maximum inside the frequency grid.")
        w0, w1, s0, s1 = omegas[k], omegas[k + step], spectrum[k], spectrum[k + step]
        return w0 + (half - s0) * (w1 - w0) / (s1 - s0)

    return float(crossing(1) - crossing(-1))
