"""
Time-bin matrix product state engine (collision model).

The chain holds one tensor per photon time bin plus one emitter tensor. Tensors are indexed
(left bond, physical, right bond). Initially the emitter sits at position 0, in front of all
bins, and the chain is right-canonical with the orthogonality center (OC) on the emitter.
Step k lets the emitter interact with bin k and swaps it behind that bin, so the OC always
rides with the emitter and the interacting pair is always adjacent.

Symmetric (two-channel) bins carry a fused physical index n_R * d + n_L.
"""
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
import scipy.linalg
from tqdm.auto import tqdm

from wgpulse.analytic import EmissionRecord
from wgpulse.errors import (BondDimensionError, ConservationError, SvdConvergenceError,
                            TruncationError)
from wgpulse.model import EmitterParams, G1Matrix, PulseSpec, TimeGrid, TimeSeries, bin_amplitudes
from wgpulse.settings import SETTINGS

__all__ = ("TruncationPolicy", "TimeBinMPS", "svd_truncate", "build_input_1photon", "build_input_2photon",
           "build_vacuum", "build_input", "pair_unitary", "evolve", "two_bin_correlator",
           "correlation_matrix", "save_checkpoint", "load_checkpoint")

CHECKPOINT_MAGIC = b"WGMPS\x00"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct('<6sHBBIIIId')
_DIMS = struct.Struct('<3I')

# Smallest norm drift tolerated regardless of the truncation cutoff (round-off floor).
_NORM_FLOOR = 1e-10


@dataclass(frozen=True)
class TruncationPolicy:
    svd_cutoff: float = SETTINGS.MPS_DEFAULT.svd_cutoff
    max_bond: int = SETTINGS.MPS_DEFAULT.max_bond

    def __post_init__(self):
        if not 0 <= self.svd_cutoff < 1:
            raise ValueError(f"svd_cutoff must lie in [0, 1), got {self.svd_cutoff}.")
        if int(self.max_bond) != self.max_bond or self.max_bond < 2:
            raise ValueError(f"max_bond must be an integer >= 2, got {self.max_bond}.")

    def check_photons(self, photons):
        if self.max_bond < photons + 1:
            raise ValueError(f"max_bond={self.max_bond} cannot hold a {photons}-photon state.")

    @property
    def budget(self):
        """Largest discarded weight allowed in a single split."""
        return self.svd_cutoff * SETTINGS.TRUNCATION_BUDGET_FACTOR


def svd_truncate(matrix, policy: TruncationPolicy):
    """
    Truncated singular value decomposition.

    Keeps singular values above `policy.svd_cutoff` times the largest one, at most
    `policy.max_bond` of them. gesdd is tried first and gesvd is the fallback.

    Returns
    -------
    U: np.ndarray, shape (m, r)
    S: np.ndarray, shape (r,), nonnegative and descending
    Vh: np.ndarray, shape (r, n)
    discarded_weight: float
        Sum of the squared discarded singular values, i.e. ||A - U S Vh||_F^2.
    """
    matrix = np.asarray(matrix, dtype=complex)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Cannot decompose a matrix with non-finite entries.")
    try:
        U, S, Vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver='gesdd')
    except np.linalg.LinAlgError:
        logging.warning("gesdd did not converge, retrying with gesvd.")
        try:
            U, S, Vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver='gesvd')
        except np.linalg.LinAlgError as e:
            raise SvdConvergenceError(f"SVD of a {matrix.shape} matrix did not converge: {e}")

    keep = int(np.count_nonzero(S > policy.svd_cutoff * S[0])) if S.size and S[0] > 0 else 1
    keep = max(1, min(keep, policy.max_bond))
    discarded = float(np.sum(S[keep:] ** 2))
    return U[:, :keep], S[:keep], Vh[:keep], discarded


def _annihilator(d):
    return np.diag(np.sqrt(np.arange(1, d)), k=1)


def _channel_operators(photon_dim, channels):
    """Annihilation operators (R, L) on one bin; L is None for a single channel."""
    b = _annihilator(photon_dim)
    if channels == 1:
        return b, None
    eye = np.eye(photon_dim)
    return np.kron(b, eye), np.kron(eye, b)


def _number_diagonals(photon_dim, channels):
    counts = np.arange(photon_dim, dtype=float)
    if channels == 1:
        return counts, np.zeros(photon_dim)
    ones = np.ones(photon_dim)
    return np.kron(counts, ones), np.kron(ones, counts)


class TimeBinMPS:
    """
    Chain of photon time-bin tensors plus one emitter tensor.

    Parameters
    ----------
    tensors: list of np.ndarray
        Rank-3 tensors (left, physical, right); outer bonds have dimension one.
    oc_index: int
        Position of the orthogonality center.
    emitter_index: int
        Position of the emitter tensor (physical dimension 2).
    channels: int
        1 (right-moving bins) or 2 (fused right/left bins).
    photon_dim: int
        Local photon dimension d per channel.
    dt: float
        Bin width.
    """

    def __init__(self, tensors: List[np.ndarray], oc_index: int, emitter_index: int,
                 channels: int, photon_dim: int, dt: float):
        if channels not in (1, 2):
            raise ValueError(f"channels must be 1 or 2, got {channels}.")
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.oc_index = oc_index
        self.emitter_index = emitter_index
        self.channels = channels
        self.photon_dim = photon_dim
        self.dt = dt
        self.discarded_weight = 0.0

    @property
    def n_bins(self):
        return len(self.tensors) - 1

    @property
    def bin_dim(self):
        return self.photon_dim ** self.channels

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond_dim(self):
        return max(self.bond_dims, default=1)

    def bin_positions(self):
        return [p for p in range(len(self.tensors)) if p != self.emitter_index]

    def copy(self):
        other = TimeBinMPS([t.copy() for t in self.tensors], self.oc_index, self.emitter_index,
                           self.channels, self.photon_dim, self.dt)
        other.discarded_weight = self.discarded_weight
        return other

    def oc_norm(self):
        """<psi|psi> read off the orthogonality center."""
        return float(np.sum(np.abs(self.tensors[self.oc_index]) ** 2))

    def norm(self):
        """<psi|psi> by full contraction, independent of the canonical form."""
        env = np.ones((1, 1), dtype=complex)
        for t in self.tensors:
            env = np.einsum('xy,xsb,ysc->bc', env, np.conj(t), t, optimize=True)
        return float(env[0, 0].real)

    def _move_right(self):
        p = self.oc_index
        t = self.tensors[p]
        l, d, r = t.shape
        Q, R = scipy.linalg.qr(t.reshape(l * d, r), mode='economic')
        self.tensors[p] = Q.reshape(l, d, Q.shape[1])
        self.tensors[p + 1] = np.einsum('ab,bsc->asc', R, self.tensors[p + 1])
        self.oc_index = p + 1

    def _move_left(self):
        p = self.oc_index
        t = self.tensors[p]
        l, d, r = t.shape
        Q, R = scipy.linalg.qr(t.reshape(l, d * r).conj().T, mode='economic')
        self.tensors[p] = Q.conj().T.reshape(Q.shape[1], d, r)
        self.tensors[p - 1] = np.einsum('asb,bc->asc', self.tensors[p - 1], R.conj().T)
        self.oc_index = p - 1

    def move_oc(self, target):
        """Shift the orthogonality center to `target` by QR sweeps."""
        if not 0 <= target < len(self.tensors):
            raise IndexError(f"OC target {target} outside the chain of {len(self.tensors)} tensors.")
        while self.oc_index < target:
            self._move_right()
        while self.oc_index > target:
            self._move_left()
        return self

    def canonicalize(self, target=0):
        """Bring the full chain into mixed canonical form around `target`."""
        self.oc_index = len(self.tensors) - 1
        self.move_oc(0)
        return self.move_oc(target)

    def bin_occupations(self):
        """
        Photon number per bin and channel, <n_{R,k}> and <n_{L,k}>.

        Requires the OC at position 0 with everything to its right right-normalized, the layout
        of a freshly built input state.
        """
        if self.oc_index != 0:
            raise ValueError("bin_occupations needs the orthogonality center at position 0.")
        num_R, num_L = _number_diagonals(self.photon_dim, self.channels)
        occ_R, occ_L = [], []
        env = np.ones((1, 1), dtype=complex)
        for p, t in enumerate(self.tensors):
            if p != self.emitter_index:
                weights = np.einsum('xy,xsb,ysb->s', env, np.conj(t), t, optimize=True).real
                occ_R.append(weights @ num_R)
                occ_L.append(weights @ num_L)
            env = np.einsum('xy,xsb,ysc->bc', env, np.conj(t), t, optimize=True)
        return np.array(occ_R), np.array(occ_L)

    def to_dense(self):
        """Full state vector in site order (only for small chains)."""
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=([-1], [0]))
        return psi.reshape(-1)


def _chain(photon_tensors, channels, photon_dim, dt):
    emitter = np.zeros((1, 2, 1), dtype=complex)
    emitter[0, 0, 0] = 1
    state = TimeBinMPS([emitter] + list(photon_tensors), oc_index=len(photon_tensors),
                       emitter_index=0, channels=channels, photon_dim=photon_dim, dt=dt)
    return state.move_oc(0)


def _single_index(n, photon_dim, channels):
    """Physical index of n photons in the right channel."""
    return n * photon_dim if channels == 2 else n


def _check_channels(channels):
    if channels not in (1, 2):
        raise ValueError(f"channels must be 1 or 2, got {channels}.")


def build_input_1photon(pulse: PulseSpec, grid: TimeGrid, channels=1):
    """
    One-photon wavepacket sum_k alpha_k b_k^dag |0> with alpha_k = sqrt(dt) f_k, right channel only.

    The bond index counts the photons already placed (0 or 1).
    """
    _check_channels(channels)
    alphas = bin_amplitudes(pulse, grid)
    photon_dim = 2
    dim = photon_dim ** channels
    one = _single_index(1, photon_dim, channels)
    tensors = []
    for alpha in alphas:
        a = np.zeros((2, dim, 2), dtype=complex)
        a[0, 0, 0] = 1
        a[1, 0, 1] = 1
        a[0, one, 1] = alpha
        tensors.append(a)
    tensors[0] = tensors[0][:1]
    tensors[-1] = tensors[-1][:, :, 1:]
    return _chain(tensors, channels, photon_dim, grid.dt)


def build_input_2photon(pulse: PulseSpec, grid: TimeGrid, channels=1):
    """
    Two-photon wavepacket (1/sqrt 2) (sum_k alpha_k b_k^dag)^2 |0>.

    In the occupation basis this is sum_k alpha_k^2 |2_k> + sqrt(2) sum_{k<l} alpha_k alpha_l |1_k 1_l>.
    The bond index counts the photons already placed (0, 1 or 2); the sqrt(2) prefactor sits on
    the first tensor and a doubly occupied bin carries alpha_k^2 / sqrt(2).
    """
    _check_channels(channels)
    alphas = bin_amplitudes(pulse, grid)
    photon_dim = 3
    dim = photon_dim ** channels
    one = _single_index(1, photon_dim, channels)
    two = _single_index(2, photon_dim, channels)
    tensors = []
    for alpha in alphas:
        a = np.zeros((3, dim, 3), dtype=complex)
        for c in range(3):
            a[c, 0, c] = 1
        a[0, one, 1] = alpha
        a[1, one, 2] = alpha
        a[0, two, 2] = alpha ** 2 / math.sqrt(2)
        tensors.append(a)
    tensors[0] = math.sqrt(2) * tensors[0][:1]
    tensors[-1] = tensors[-1][:, :, 2:]
    return _chain(tensors, channels, photon_dim, grid.dt)


def build_vacuum(grid: TimeGrid, channels=1, photon_dim=2):
    """Empty waveguide; the emitter starts in its ground state."""
    _check_channels(channels)
    dim = photon_dim ** channels
    tensors = []
    for _ in range(grid.n_steps):
        a = np.zeros((1, dim, 1), dtype=complex)
        a[0, 0, 0] = 1
        tensors.append(a)
    return _chain(tensors, channels, photon_dim, grid.dt)


def build_input(pulse: PulseSpec, grid: TimeGrid, channels=1):
    if pulse.photons == 1:
        return build_input_1photon(pulse, grid, channels)
    return build_input_2photon(pulse, grid, channels)


def pair_unitary(params: EmitterParams, dt, photon_dim, channels):
    """
    exp(-i h) on the (emitter, bin) pair space, emitter index major.

    h = delta s+s- dt + i sqrt(gamma_R dt)(s+ b_R - s- b_R^dag) + i sqrt(gamma_L dt)(s+ b_L - s- b_L^dag)
    """
    if channels == 1 and params.gamma_L > 0:
        raise ValueError("A single-channel chain cannot describe an emitter with gamma_L > 0.")
    sigma_plus = np.array([[0, 0], [1, 0]], dtype=complex)
    sigma_minus = sigma_plus.T
    b_R, b_L = _channel_operators(photon_dim, channels)
    dim = b_R.shape[0]

    generator = -1j * params.delta * dt * np.kron(sigma_plus @ sigma_minus, np.eye(dim))
    for rate, b in ((params.gamma_R, b_R), (params.gamma_L, b_L)):
        if b is None or rate == 0:
            continue
        generator = generator + math.sqrt(rate * dt) * (np.kron(sigma_plus, b) - np.kron(sigma_minus, b.conj().T))
    return scipy.linalg.expm(generator)


def evolve(state: TimeBinMPS, params: EmitterParams, grid: TimeGrid, policy: TruncationPolicy = None,
           progress=False):
    """
    Scatter the input state off the emitter, one time bin per step.

    Parameters
    ----------
    state: TimeBinMPS
        Freshly built input state (emitter in front of all bins). Not modified.
    params: EmitterParams
    grid: TimeGrid
        Must have one step per photon bin of `state`.
    policy: TruncationPolicy
    progress: bool
        Show a progress bar.

    Returns
    -------
    record: EmissionRecord
        n_TLS(t_k) after step k and bin fluxes <n_k>/dt, stamped t_k = (k+1) dt.
    final_state: TimeBinMPS
        Fully scattered state, emitter (and OC) at the end of the chain.
    """
    if policy is None:
        policy = TruncationPolicy()
    if state.n_bins != grid.n_steps:
        raise ValueError(f"State has {state.n_bins} bins but the grid has {grid.n_steps} steps.")
    if state.emitter_index != 0:
        raise ValueError("The input state has already been scattered.")
    if not math.isclose(state.dt, grid.dt):
        raise ValueError(f"State bins have width {state.dt}, grid step is {grid.dt}.")

    state = state.copy().move_oc(0)
    occ_in_R, occ_in_L = state.bin_occupations()
    photons_in = float(np.sum(occ_in_R) + np.sum(occ_in_L))
    policy.check_photons(int(round(photons_in)))
    # photons still waiting in bins k+1.. before step k
    waiting = np.concatenate((np.cumsum((occ_in_R + occ_in_L)[::-1])[::-1][1:], [0.0]))

    dt = grid.dt
    d = state.bin_dim
    U = pair_unitary(params, dt, state.photon_dim, state.channels).reshape(2, d, 2, d)
    num_R, num_L = _number_diagonals(state.photon_dim, state.channels)
    norm_budget = max(grid.n_steps * policy.svd_cutoff * SETTINGS.NORM_BUDGET_FACTOR, _NORM_FLOOR)

    n_tls = np.empty(grid.n_steps)
    occ_R = np.empty(grid.n_steps)
    occ_L = np.empty(grid.n_steps)
    emitted = 0.0
    for k in tqdm(range(grid.n_steps), disable=not progress, desc="Scattering time bins"):
        p = state.emitter_index
        theta = np.einsum('asb,btc->astc', state.tensors[p], state.tensors[p + 1])
        theta = np.einsum('stuv,auvc->astc', U, theta)

        probs = np.abs(theta) ** 2
        norm = float(probs.sum())
        n_tls[k] = probs[:, 1].sum()
        bin_weights = probs.sum(axis=(0, 1, 3))
        occ_R[k] = bin_weights @ num_R
        occ_L[k] = bin_weights @ num_L
        emitted += occ_R[k] + occ_L[k]

        residuals = {'step': k, 'norm_drift': abs(1 - norm),
                     'excitation_drift': abs(n_tls[k] + emitted + waiting[k] - photons_in)}
        if residuals['norm_drift'] > norm_budget:
            raise ConservationError(f"State norm drifted to {norm:.12g} at step {k}.", residuals)
        if residuals['excitation_drift'] > SETTINGS.EXCITATION_TOLERANCE:
            raise ConservationError(f"Excitation number drifted by {residuals['excitation_drift']:.3g} "
                                    f"at step {k}.", residuals)

        l, r = theta.shape[0], theta.shape[3]
        swapped = theta.transpose(0, 2, 1, 3).reshape(l * d, 2 * r)
        left, values, right, discarded = svd_truncate(swapped, policy)
        if discarded > policy.budget:
            residuals['discarded_weight'] = discarded
            if len(values) == policy.max_bond:
                raise BondDimensionError(f"Bond dimension exceeded max_bond={policy.max_bond} at step {k}.",
                                         residuals)
            raise TruncationError(f"Discarded weight {discarded:.3g} over budget {policy.budget:.3g} "
                                  f"at step {k}.", residuals)
        state.discarded_weight += discarded
        chi = len(values)
        state.tensors[p] = left.reshape(l, d, chi)
        state.tensors[p + 1] = (values[:, None] * right).reshape(chi, 2, r)
        state.emitter_index = p + 1
        state.oc_index = p + 1

    logging.verbose(f"MPS evolution finished: {grid.n_steps} steps, max bond dimension {state.max_bond_dim}, "
                    f"discarded weight {state.discarded_weight:.3g}.")
    record = EmissionRecord(n_TLS=TimeSeries(grid, n_tls, 'n_tls'),
                            flux_R=TimeSeries(grid, occ_R / dt, 'flux_R'),
                            flux_L=TimeSeries(grid, occ_L / dt, 'flux_L'),
                            N_R=TimeSeries(grid, np.cumsum(occ_R), 'N_R'),
                            N_L=TimeSeries(grid, np.cumsum(occ_L), 'N_L'),
                            photons=int(round(photons_in)),
                            engine='mps')
    return record, state


def _scattered_left_canonical(final_state: TimeBinMPS):
    if final_state.emitter_index != final_state.n_bins:
        raise ValueError("Correlators need a fully scattered state (emitter at the end of the chain).")
    if final_state.oc_index == final_state.n_bins:
        return final_state
    return final_state.copy().move_oc(final_state.n_bins)


def _bin_operator(state, channel):
    b_R, b_L = _channel_operators(state.photon_dim, state.channels)
    if channel == 'R':
        return b_R
    if channel == 'L' and b_L is not None:
        return b_L
    raise ValueError(f"Channel '{channel}' is not available on a {state.channels}-channel chain.")


def _right_environments(state):
    """envs[p] contracts sites p.. of <psi|psi>, indexed (bra, ket)."""
    envs = [None] * (len(state.tensors) + 1)
    envs[-1] = np.ones((1, 1), dtype=complex)
    for p in range(len(state.tensors) - 1, -1, -1):
        t = state.tensors[p]
        envs[p] = np.einsum('xsb,ysc,bc->xy', np.conj(t), t, envs[p + 1], optimize=True)
    return envs


def two_bin_correlator(final_state: TimeBinMPS, i, j, channel='R'):
    """
    <b_i^dag b_j> / dt for bins i <= j of a fully scattered state, i.e. v_g <a^dag(t_i) a(t_j)>.

    Re-canonicalizes (on a copy) if the OC is not on the emitter.
    """
    if not 0 <= i <= j < final_state.n_bins:
        raise IndexError(f"Bin pair ({i}, {j}) outside 0 <= i <= j < {final_state.n_bins}.")
    state = _scattered_left_canonical(final_state)
    b = _bin_operator(state, channel)

    # left of bin i everything is left-normalized, so the environment is the identity
    a_i = state.tensors[i]
    bra_i = np.einsum('st,atb->asb', b, a_i)
    ket_i = bra_i if i == j else a_i
    env = np.einsum('asb,asc->bc', np.conj(bra_i), ket_i)
    for p in range(i + 1, j + 1):
        t = state.tensors[p]
        ket = np.einsum('st,atb->asb', b, t) if p == j else t
        env = np.einsum('xy,xsb,ysc->bc', env, np.conj(t), ket, optimize=True)
    for p in range(j + 1, len(state.tensors)):
        t = state.tensors[p]
        env = np.einsum('xy,xsb,ysc->bc', env, np.conj(t), t, optimize=True)
    return complex(env[0, 0]) / state.dt


def correlation_matrix(final_state: TimeBinMPS, grid: TimeGrid, channel='R'):
    """
    All two-bin correlators g1[i, j - i] = <b_i^dag b_j> / dt as a G1Matrix.

    One pass over the bins: the left environments of every open row i are propagated together
    as a stack, so the Python loop runs once per bin.
    """
    if final_state.n_bins != grid.n_steps:
        raise ValueError(f"State has {final_state.n_bins} bins but the grid has {grid.n_steps} steps.")
    state = _scattered_left_canonical(final_state)
    b = _bin_operator(state, channel)
    right_envs = _right_environments(state)

    n = grid.n_steps
    data = np.zeros((n, n), dtype=complex)
    rows = np.zeros((0, 1, 1), dtype=complex)
    for j in range(n):
        a = state.tensors[j]
        ba = np.einsum('st,atb->asb', b, a)
        env = right_envs[j + 1]
        data[j, 0] = np.einsum('asb,asc,bc->', np.conj(ba), ba, env, optimize=True)
        if j:
            values = np.einsum('ixy,xsb,ysc,bc->i', rows, np.conj(a), ba, env, optimize=True)
            open_rows = np.arange(j)
            data[open_rows, j - open_rows] = values
            rows = np.einsum('ixy,xsb,ysc->ibc', rows, np.conj(a), a, optimize=True)
            rows = np.concatenate((rows, np.einsum('asb,asc->bc', np.conj(ba), a)[None]))
        else:
            rows = np.einsum('asb,asc->bc', np.conj(ba), a)[None]
    return G1Matrix(grid=grid, data=data / state.dt)


def save_checkpoint(state: TimeBinMPS, path):
    """
    Write the chain to a binary file.

    Layout (little-endian): header (magic, version, channels, photon_dim, n_tensors, oc_index,
    emitter_index, reserved, dt), one (left, physical, right) uint32 triple per tensor, then
    every tensor as row-major complex128.
    """
    path = Path(path)
    with open(path, 'wb') as f:
        f.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, state.channels, state.photon_dim,
                             len(state.tensors), state.oc_index, state.emitter_index, 0, state.dt))
        for t in state.tensors:
            f.write(_DIMS.pack(*t.shape))
        for t in state.tensors:
            f.write(np.ascontiguousarray(t, dtype='<c16').tobytes(order='C'))
    return path


def load_checkpoint(path):
    with open(path, 'rb') as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path} is too short to be an MPS checkpoint.")
        magic, version, channels, photon_dim, n_tensors, oc_index, emitter_index, _, dt = _HEADER.unpack(header)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not an MPS checkpoint.")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"Unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION}).")
        shapes = [_DIMS.unpack(f.read(_DIMS.size)) for _ in range(n_tensors)]
        tensors = []
        for shape in shapes:
            count = int(np.prod(shape))
            buffer = f.read(16 * count)
            if len(buffer) != 16 * count:
                raise ValueError(f"{path} is truncated.")
            tensors.append(np.frombuffer(buffer, dtype='<c16').reshape(shape).astype(complex))
    return TimeBinMPS(tensors, oc_index=oc_index, emitter_index=emitter_index, channels=channels,
                      photon_dim=photon_dim, dt=dt)
