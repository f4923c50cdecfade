"""
Domain types shared by both engines.

Units: gamma = v_g = 1 is the natural choice but nothing here assumes it; times are in the
units of 1/gamma the caller picked, frequencies are offsets from the pulse carrier.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from wgpulse.settings import SETTINGS

__all__ = ("EmitterParams", "PulseSpec", "TimeGrid", "TimeSeries", "G1Matrix",
           "envelope", "envelope_transform", "envelope_spectrum", "bin_amplitudes", "grid_for_pulse")


@dataclass(frozen=True)
class EmitterParams:
    """Decay rates into the right/left waveguide channels and the emitter detuning delta = w_a - w_p."""
    gamma_R: float
    gamma_L: float
    delta: float = 0.0

    def __post_init__(self):
        if self.gamma_R < 0 or self.gamma_L < 0:
            raise ValueError(f"Decay rates must be nonnegative, got gamma_R={self.gamma_R}, gamma_L={self.gamma_L}.")
        if self.gamma_R + self.gamma_L <= 0:
            raise ValueError("The emitter must couple to at least one channel (gamma_R + gamma_L > 0).")

    @classmethod
    def chiral(cls, gamma=1.0, delta=0.0):
        return cls(gamma_R=gamma, gamma_L=0.0, delta=delta)

    @classmethod
    def symmetric(cls, gamma=1.0, delta=0.0):
        return cls(gamma_R=gamma / 2, gamma_L=gamma / 2, delta=delta)

    @classmethod
    def from_kind(cls, kind: str, gamma=1.0, delta=0.0):
        if kind == 'chiral':
            return cls.chiral(gamma, delta)
        elif kind == 'symmetric':
            return cls.symmetric(gamma, delta)
        raise ValueError(f"Unknown emitter kind '{kind}', expected one of {SETTINGS.EMITTER_KINDS}.")

    @property
    def gamma(self):
        return self.gamma_R + self.gamma_L

    @property
    def channels(self):
        """Number of waveguide channels the emitter radiates into (1 for chiral coupling)."""
        return 1 if self.gamma_L == 0 else 2

    @property
    def kind(self):
        if self.gamma_L == 0:
            return 'chiral'
        if math.isclose(self.gamma_R, self.gamma_L):
            return 'symmetric'
        return 'asymmetric'


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid; bin k covers (k*dt, (k+1)*dt] and is labelled by t(k) = (k+1)*dt."""
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Time step must be positive, got {self.dt}.")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"A time grid needs at least one step, got {self.n_steps}.")
        object.__setattr__(self, 'n_steps', int(self.n_steps))

    @classmethod
    def covering(cls, t_end, dt):
        """Smallest grid with step `dt` whose last time is at or beyond `t_end`."""
        return cls(dt=dt, n_steps=max(1, int(math.ceil(t_end / dt - 1e-9))))

    def t(self, k):
        return (np.asarray(k) + 1) * self.dt

    @property
    def times(self):
        return np.arange(1, self.n_steps + 1) * self.dt

    @property
    def t_end(self):
        return self.n_steps * self.dt

    def refined(self, factor: int = 2):
        """Grid with `factor` times more steps over the same span.

        Every `factor`-th time of the refined grid coincides with a time of this grid.
        """
        return TimeGrid(dt=self.dt / factor, n_steps=self.n_steps * factor)

    def __len__(self):
        return self.n_steps


@dataclass(frozen=True, eq=False)
class TimeSeries:
    grid: TimeGrid
    values: np.ndarray
    label: str = ''

    def __post_init__(self):
        values = np.array(self.values)
        if values.shape != (self.grid.n_steps,):
            raise ValueError(f"Series '{self.label}' has shape {values.shape}, "
                             f"expected ({self.grid.n_steps},).")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    @property
    def times(self):
        return self.grid.times

    def __len__(self):
        return len(self.values)

    def __getitem__(self, item):
        return self.values[item]


@dataclass(frozen=True, eq=False)
class G1Matrix:
    """
    First-order correlation g1[i, j] = v_g <a_R^dag(t_i) a_R(t_i + tau_j)> with tau_j = j*dt.

    Only the triangle j < n_steps - i is meaningful, entries outside are stored as zero.
    """
    grid: TimeGrid
    data: np.ndarray

    def __post_init__(self):
        n = self.grid.n_steps
        data = np.array(self.data, dtype=complex)
        if data.shape != (n, n):
            raise ValueError(f"G1 data has shape {data.shape}, expected ({n}, {n}).")
        data[~self.triangle_mask(n)] = 0
        data.flags.writeable = False
        object.__setattr__(self, 'data', data)

    @staticmethod
    def triangle_mask(n):
        i, j = np.indices((n, n))
        return i + j < n

    @property
    def diagonal(self):
        """g1(t_i, t_i), i.e. the transmitted flux."""
        return self.data[:, 0]

    def kernel(self):
        """Full two-time kernel K[a, b] = K(t_a, t_b), with K(t', t) = conj(K(t, t'))."""
        n = self.grid.n_steps
        a, b = np.indices((n, n))
        upper = b >= a
        out = np.empty((n, n), dtype=complex)
        out[upper] = self.data[a[upper], (b - a)[upper]]
        out[~upper] = np.conj(self.data[b[~upper], (a - b)[~upper]])
        return out


@dataclass(frozen=True, eq=False)
class PulseSpec:
    """
    Normalized Fock-state pulse: envelope shape plus photon number.

    Use the constructors `rect`, `gaussian` and `sampled`; the normalization amplitude is
    computed on construction so that the integral of |f(t)|^2 over t > 0 is one.
    """
    shape: str
    photons: int = 1
    t_p: Optional[float] = None
    t_c: Optional[float] = None
    samples: Optional[np.ndarray] = None
    samples_dt: Optional[float] = None
    amplitude: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.shape not in SETTINGS.PULSE_SHAPES:
            raise ValueError(f"Unknown pulse shape '{self.shape}', expected one of {SETTINGS.PULSE_SHAPES}.")
        if self.photons not in SETTINGS.PHOTON_NUMBERS:
            raise ValueError(f"Only {SETTINGS.PHOTON_NUMBERS} photon pulses are supported, got {self.photons}.")

        if self.shape == 'rect':
            if self.t_p is None or not self.t_p > 0:
                raise ValueError(f"Rectangular pulses need a positive length t_p, got {self.t_p}.")
            amplitude = 1 / math.sqrt(self.t_p)
        elif self.shape == 'gaussian':
            if self.t_p is None or not self.t_p > 0:
                raise ValueError(f"Gaussian pulses need a positive width t_p, got {self.t_p}.")
            if self.t_c is None:
                raise ValueError("Gaussian pulses need a center t_c.")
            # integral of exp(-(t - t_c)^2 / t_p^2) over t > 0
            norm = self.t_p * math.sqrt(math.pi) / 2 * (1 + math.erf(self.t_c / self.t_p))
            amplitude = 1 / math.sqrt(norm)
        else:
            if self.samples_dt is None or not self.samples_dt > 0:
                raise ValueError(f"Sampled pulses need a positive sample spacing, got {self.samples_dt}.")
            samples = np.array(self.samples, dtype=float).ravel()
            if samples.size == 0 or not np.all(np.isfinite(samples)):
                raise ValueError("Sampled pulse values must be a nonempty list of finite numbers.")
            norm = float(np.sum(samples ** 2) * self.samples_dt)
            if norm == 0:
                raise ValueError("Sampled pulse is identically zero, normalization impossible.")
            samples.flags.writeable = False
            object.__setattr__(self, 'samples', samples)
            amplitude = 1 / math.sqrt(norm)
        object.__setattr__(self, 'amplitude', amplitude)

    @classmethod
    def rect(cls, t_p, photons=1):
        return cls(shape='rect', photons=photons, t_p=t_p)

    @classmethod
    def gaussian(cls, t_c, t_p, photons=1):
        return cls(shape='gaussian', photons=photons, t_p=t_p, t_c=t_c)

    @classmethod
    def sampled(cls, values: Sequence[float], dt, photons=1):
        """Bin-constant envelope: values[k] on (k*dt, (k+1)*dt]."""
        return cls(shape='sampled', photons=photons, samples=values, samples_dt=dt)

    @property
    def support_end(self):
        """Time after which the envelope vanishes (numerically, for Gaussians)."""
        if self.shape == 'rect':
            return self.t_p
        elif self.shape == 'gaussian':
            return self.t_c + SETTINGS.GAUSSIAN_SUPPORT_WIDTHS * self.t_p
        nonzero = np.flatnonzero(self.samples)
        return (nonzero[-1] + 1) * self.samples_dt

    @property
    def jumps(self):
        """Times at which the envelope is discontinuous."""
        if self.shape == 'rect':
            return np.array([0.0, self.t_p])
        elif self.shape == 'gaussian':
            return np.array([0.0])
        return np.arange(self.samples.size + 1) * self.samples_dt

    def with_photons(self, photons):
        return PulseSpec(shape=self.shape, photons=photons, t_p=self.t_p, t_c=self.t_c,
                         samples=self.samples, samples_dt=self.samples_dt)


def envelope(pulse: PulseSpec, t):
    """
    Temporal envelope f(t) of a normalized pulse, zero outside its support.

    Parameters
    ----------
    pulse: PulseSpec
    t: float or np.ndarray
        Evaluation times.

    Returns
    -------
    f: float or np.ndarray
        Real amplitude in units of 1/sqrt(time), same shape as `t`.
    """
    t = np.asarray(t, dtype=float)
    if pulse.shape == 'rect':
        f = np.where((t > 0) & (t <= pulse.t_p), pulse.amplitude, 0.0)
    elif pulse.shape == 'gaussian':
        gauss = pulse.amplitude * np.exp(-(t - pulse.t_c) ** 2 / (2 * pulse.t_p ** 2))
        f = np.where(t > 0, gauss, 0.0)
    else:
        index = np.ceil(t / pulse.samples_dt - 1e-9).astype(int) - 1
        inside = (t > 0) & (index < pulse.samples.size)
        f = np.where(inside, pulse.amplitude * pulse.samples[np.clip(index, 0, pulse.samples.size - 1)], 0.0)
    return f if f.ndim else float(f)


def envelope_transform(pulse: PulseSpec, omega):
    """Unitary Fourier transform f(w) = (2 pi)^(-1/2) * integral f(t) exp(i w t) dt, evaluated in closed form."""
    omega = np.asarray(omega, dtype=float)
    if pulse.shape == 'rect':
        t_p = pulse.t_p
        # np.sinc(x) = sin(pi x) / (pi x)
        return (pulse.amplitude * t_p * np.exp(0.5j * omega * t_p) * np.sinc(omega * t_p / (2 * np.pi))
                / math.sqrt(2 * math.pi))
    elif pulse.shape == 'gaussian':
        s, c = pulse.t_p, pulse.t_c
        # erfc(z) = 2 - erfc(-z) keeps every factor bounded for large t_c / t_p and large |w| t_p
        z = -c / (math.sqrt(2) * s) - 1j * omega * s / math.sqrt(2)
        integral = s * math.sqrt(math.pi / 2) * (2 * np.exp(1j * omega * c - (omega * s) ** 2 / 2)
                                                 - math.exp(-c ** 2 / (2 * s ** 2)) * special.erfcx(-z))
        return pulse.amplitude * integral / math.sqrt(2 * math.pi)
    dt = pulse.samples_dt
    centres = (np.arange(pulse.samples.size) + 0.5) * dt
    phases = np.exp(1j * np.multiply.outer(omega, centres))
    bin_factor = dt * np.sinc(omega * dt / (2 * np.pi))
    return pulse.amplitude * bin_factor * (phases @ pulse.samples) / math.sqrt(2 * math.pi)


def envelope_spectrum(pulse: PulseSpec, omega):
    """Power spectrum |f(w)|^2 of the envelope, integrating to one over w."""
    spectrum = np.abs(envelope_transform(pulse, omega)) ** 2
    return spectrum if spectrum.ndim else float(spectrum)


def bin_amplitudes(pulse: PulseSpec, grid: TimeGrid, tolerance=None):
    """
    Time-bin amplitudes alpha_k = sqrt(dt) * (mean of f over bin k).

    The bin means use three-point Gauss-Legendre quadrature. The amplitudes are renormalized
    to sum(|alpha_k|^2) = 1 if they are within `tolerance` of it, otherwise the grid does not
    resolve or cover the pulse and a ValueError is raised.
    """
    if tolerance is None:
        tolerance = SETTINGS.BIN_NORM_TOLERANCE
    nodes, weights = np.polynomial.legendre.leggauss(3)
    starts = grid.times - grid.dt
    points = starts[:, None] + (nodes[None, :] + 1) / 2 * grid.dt
    means = envelope(pulse, points) @ weights / 2
    alphas = np.sqrt(grid.dt) * means
    norm = float(np.sum(alphas ** 2))
    if abs(norm - 1) > tolerance:
        raise ValueError(f"Pulse amplitudes on the time grid have norm {norm:.6g}; "
                         f"the grid (dt={grid.dt}, t_end={grid.t_end}) does not resolve or cover the pulse.")
    return alphas / math.sqrt(norm)


def grid_for_pulse(pulse: PulseSpec, dt=None, tail=None, t_end=None):
    """Time grid covering the pulse support plus a decay tail (or up to `t_end` if given)."""
    if dt is None:
        dt = SETTINGS.GRID.gamma_dt
    if t_end is None:
        t_end = pulse.support_end + (SETTINGS.GRID.tail if tail is None else tail)
    return TimeGrid.covering(t_end, dt)
