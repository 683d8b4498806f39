"""Hinged plate on the interval and its link with the Schrodinger group.

The plate ``z_tt + A0^2 z = 0`` with ``A0 = -Delta`` (Dirichlet) has mode
frequencies ``lambda_j`` instead of ``sqrt(lambda_j)``.  Writing
``z(t) = exp(itA0) z_+ + exp(-itA0) z_-`` splits a plate solution into two
Schrodinger waves; the velocity observation then separates into two
Schrodinger observation terms plus cross terms whose size is governed by
``int rho^2(t) exp(i t (lambda_j + lambda_k)) dt`` for a smooth time cutoff rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .dynamics import TimeGrid, propagate_array
from .observability import BumpFunction, Gramian
from .spectral_core import SpectralGrid, State

__all__ = [
    "PlateSystem",
    "SplitPair",
    "CutoffProfile",
    "InteractionBound",
    "PlateTransfer",
    "UnderResolvedError",
    "plate_propagate",
    "plate_norm",
    "split",
    "unsplit",
    "interaction_integrals",
    "interaction_bound",
    "interaction_envelope",
    "interaction_sum",
    "schrodinger_gramian",
    "plate_gramian",
    "plate_weak_observability_constant",
    "eigen_ucp_check",
]

RESOLUTION_LIMIT = 0.5


class UnderResolvedError(ValueError):
    """The time step cannot resolve the requested oscillation."""


@dataclass(frozen=True)
class PlateSystem:
    grid: SpectralGrid

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.eigenvalues

    def eigen_summability(self, order: float) -> float:
        """Truncated ``sum_k lambda_k^-order``; finite in 1D for order > 1/2."""
        return float(np.sum(self.grid.eigenvalues ** (-order)))


@dataclass(frozen=True, eq=False)
class SplitPair:
    z_plus: np.ndarray
    z_minus: np.ndarray


def plate_propagate(state: State, t: float, grid: SpectralGrid) -> State:
    """Plate group: per-mode rotation at frequency ``lambda_j``."""
    return State.from_array(propagate_array(state.as_array(), t, grid.eigenvalues))


def plate_norm(z0, z1, grid: SpectralGrid, s: float = 2.0) -> float:
    """Norm of (z0, z1) in ``H_s x H_{s-2}``, with ``||x||_s^2 = sum lambda^s |x|^2``."""
    lam = grid.eigenvalues
    sq = np.sum(lam**s * np.abs(z0) ** 2) + np.sum(lam ** (s - 2) * np.abs(z1) ** 2)
    return float(math.sqrt(sq))


def split(z0, z1, grid: SpectralGrid) -> SplitPair:
    """``z_pm = (z0 -+ i A^-1 z1) / 2``."""
    z0 = np.asarray(z0)
    w = 1j * np.asarray(z1) / grid.eigenvalues
    return SplitPair(0.5 * (z0 - w), 0.5 * (z0 + w))


def unsplit(pair: SplitPair, grid: SpectralGrid) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`split`: ``z0 = z_+ + z_-``, ``z1 = i A (z_+ - z_-)``."""
    z0 = pair.z_plus + pair.z_minus
    z1 = 1j * grid.eigenvalues * (pair.z_plus - pair.z_minus)
    return z0, z1


_GL_X, _GL_W = np.polynomial.legendre.leggauss(96)


def _smooth_ramp(y, sharpness: float) -> np.ndarray:
    """C-infinity ramp from 0 at y<=0 to 1 at y>=1.

    The normalized integral of ``exp(-a / (1 - x^2))`` over [-1, 2y-1];
    larger ``a`` gives a nearly Gaussian derivative, hence fast Fourier decay
    at moderate frequencies.
    """
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    upper = 2.0 * y - 1.0
    half = 0.5 * (upper + 1.0)
    x = -1.0 + half[..., None] * (_GL_X + 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        phi = np.exp(-sharpness / np.maximum(1.0 - x**2, 1e-300))
    partial = half * (phi @ _GL_W)
    total = _ramp_total(sharpness)
    out = np.clip(partial / total, 0.0, 1.0)
    return np.where(y >= 1.0, 1.0, np.where(y <= 0.0, 0.0, out))


def _ramp_total(sharpness: float) -> float:
    phi = np.exp(-sharpness / (1.0 - _GL_X**2))
    return float(phi @ _GL_W)


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth rho on [0, T]: zero at both ends, one on (start, end).

    Ramps occupy (0, start) and (end, T).  ``sharpness`` shapes them; see
    :func:`_smooth_ramp`.
    """

    T_inner_start: float
    T_inner_end: float
    T: float
    sharpness: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.T_inner_start < self.T_inner_end < self.T:
            raise ValueError("need 0 < T_inner_start < T_inner_end < T")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")

    @property
    def inner_length(self) -> float:
        return self.T_inner_end - self.T_inner_start

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        rise = _smooth_ramp(t / self.T_inner_start, self.sharpness)
        fall = _smooth_ramp((self.T - t) / (self.T - self.T_inner_end), self.sharpness)
        return rise * fall

    def samples(self, time_grid: TimeGrid) -> np.ndarray:
        if abs(time_grid.T - self.T) > 1e-12 * self.T:
            raise ValueError(f"profile lives on [0, {self.T}], time grid on [0, {time_grid.T}]")
        return self(time_grid.times)


class InteractionBound(NamedTuple):
    measured: float
    bound: float


def _resolution_check(time_grid: TimeGrid, freq: float):
    if time_grid.dt * freq > RESOLUTION_LIMIT:
        raise UnderResolvedError(
            f"dt * frequency = {time_grid.dt * freq:.3g} exceeds {RESOLUTION_LIMIT}; refine the time grid"
        )


def _default_time_grid(profile: CutoffProfile, freq: float) -> TimeGrid:
    M = max(4096, int(math.ceil(20.0 * profile.T * freq)))
    return TimeGrid(profile.T, M)


def _weighted_rho2(profile, time_grid):
    if profile is None:
        return np.zeros(time_grid.M + 1)
    return time_grid.weights * profile.samples(time_grid) ** 2


def interaction_integrals(profile: CutoffProfile | None, frequencies, time_grid: TimeGrid,
                          chunk: int = 64) -> np.ndarray:
    """Trapezoid values of ``int rho^2(t) exp(i t xi) dt`` for each xi."""
    xi = np.asarray(frequencies, dtype=float)
    _resolution_check(time_grid, float(np.max(np.abs(xi))) if xi.size else 0.0)
    wr = _weighted_rho2(profile, time_grid)
    t = time_grid.times
    flat = xi.ravel()
    out = np.empty(flat.size, dtype=complex)
    for s in range(0, flat.size, chunk):
        out[s:s + chunk] = np.exp(1j * np.outer(flat[s:s + chunk], t)) @ wr
    return out.reshape(xi.shape)


def interaction_bound(profile: CutoffProfile | None, j: int, k: int, N_order: float, grid: SpectralGrid,
                      time_grid: TimeGrid | None = None) -> InteractionBound:
    """Measured interaction integral for (j, k) and the envelope ``C_N (lambda_j + lambda_k)^-N``.

    ``C_N`` is calibrated on the lowest pair (1, 1) with the same quadrature.
    """
    if not N_order >= 1:
        raise ValueError("N_order must be at least 1")
    lam = grid.eigenvalues
    xi = lam[j - 1] + lam[k - 1]
    xi0 = 2.0 * lam[0]
    if profile is None:
        if time_grid is None:
            raise ValueError("a time grid is required when no profile is given")
        return InteractionBound(0.0, 0.0)
    if time_grid is None:
        time_grid = _default_time_grid(profile, xi)
    vals = np.abs(interaction_integrals(profile, [xi0, xi], time_grid))
    C_N = vals[0] * xi0**N_order
    return InteractionBound(float(vals[1]), float(C_N * xi ** (-N_order)))


def interaction_envelope(profile: CutoffProfile, grid: SpectralGrid, N_order: float,
                         time_grid: TimeGrid | None = None, max_mode: int | None = None):
    """Vectorized :func:`interaction_bound` over all pairs j, k <= max_mode.

    Returns (measured, bound), two square arrays.
    """
    if not N_order >= 1:
        raise ValueError("N_order must be at least 1")
    top = grid.N if max_mode is None else min(max_mode, grid.N)
    lam = grid.eigenvalues[:top]
    S = lam[:, None] + lam[None, :]
    if time_grid is None:
        time_grid = _default_time_grid(profile, float(S.max()))
    uniq, inv = np.unique(np.concatenate([[2.0 * grid.eigenvalues[0]], S.ravel()]), return_inverse=True)
    vals = np.abs(interaction_integrals(profile, uniq, time_grid))[inv]
    C_N = vals[0] * (2.0 * grid.eigenvalues[0]) ** N_order
    return vals[1:].reshape(S.shape), C_N * S ** (-N_order)


def _pair_integrals(profile, grid, time_grid) -> np.ndarray:
    lam = grid.eigenvalues
    S = lam[:, None] + lam[None, :]
    uniq, inv = np.unique(S, return_inverse=True)
    return interaction_integrals(profile, uniq, time_grid)[inv].reshape(S.shape)


def interaction_sum(profile: CutoffProfile, grid: SpectralGrid, time_grid: TimeGrid) -> float:
    """``sum_{j,k} |int rho^2 exp(i t (lambda_j + lambda_k))|`` over the truncation."""
    return float(np.abs(_pair_integrals(profile, grid, time_grid)).sum())


def _hermitian_gramian(matrix, grid, bump, time_grid) -> Gramian:
    matrix = 0.5 * (matrix + matrix.conj().T)
    evals, evecs = scipy.linalg.eigh(matrix)
    return Gramian((1, grid.N), 0.0, time_grid.T, matrix, evals, evecs, grid, bump, time_grid)


def schrodinger_gramian(grid: SpectralGrid, bump: BumpFunction, time_grid: TimeGrid) -> Gramian:
    """L2 Gramian of ``psi0 -> b exp(itA0) psi0`` over modes 1..N (complex Hermitian).

    Entry (j, k) is ``sum_m w_m exp(i (lambda_k - lambda_j) t_m) <b e_j, b e_k>``.
    """
    lam = grid.eigenvalues
    _resolution_check(time_grid, float(lam[-1] - lam[0]))
    E = np.exp(1j * np.outer(time_grid.times, lam))
    temporal = (E.conj().T * time_grid.weights) @ E
    return _hermitian_gramian(temporal * bump.matrix_squared, grid, bump, time_grid)


def plate_gramian(grid: SpectralGrid, bump: BumpFunction, time_grid: TimeGrid) -> Gramian:
    """Gramian of the velocity observation ``b z_t`` in ``H2 x H0``-orthonormal coordinates.

    Position vector ``e_j / lambda_j`` gives velocity ``-sin(lambda_j t) e_j``;
    velocity vector ``e_j`` gives ``cos(lambda_j t) e_j``.
    """
    lam = grid.eigenvalues
    _resolution_check(time_grid, float(2.0 * lam[-1]))
    wt = np.outer(time_grid.times, lam)
    c = np.concatenate([-np.sin(wt), np.cos(wt)], axis=1)
    temporal = (c.T * time_grid.weights) @ c
    idx = np.concatenate([np.arange(grid.N)] * 2)
    G = temporal * bump.matrix_squared[np.ix_(idx, idx)]
    G = 0.5 * (G + G.T)
    evals, evecs = scipy.linalg.eigh(G)
    return Gramian((1, grid.N), 0.0, time_grid.T, G, evals, evecs, grid, bump, time_grid)


@dataclass(frozen=True)
class PlateTransfer:
    """Lower bounds for the plate observation built from Schrodinger observability.

    ``c`` and ``remainder`` give the weak inequality
    ``int ||b z_t||^2 >= c ||(z0,z1)||^2_{H2xH0} - remainder ||(z0,z1)||^2_{H0xH-2}``;
    ``lower_bound = c - interaction`` bounds the plate Gramian itself.
    """

    c: float
    remainder: float
    interaction: float
    lower_bound: float
    direct_lambda_min: float

    @property
    def inconclusive(self) -> bool:
        return not self.lower_bound > 0.0

    @property
    def ratio(self) -> float:
        """Direct value over the transfer bound (>= 1 when the bound is valid)."""
        return self.direct_lambda_min / self.lower_bound if self.lower_bound > 0 else math.inf


def plate_weak_observability_constant(grid: SpectralGrid, bump: BumpFunction, profile: CutoffProfile,
                                      time_grid: TimeGrid, schr_constant: float) -> PlateTransfer:
    """Assemble the transfer bound and check it against the direct plate Gramian.

    ``schr_constant`` is the smallest eigenvalue of the Schrodinger Gramian
    on a window of length ``profile.inner_length``; by translation invariance
    it bounds each split term on the plateau of rho.  Cross terms are bounded
    through ``|<b e_j, b e_k>| |int rho^2 exp(i t (lambda_j + lambda_k))|``.
    """
    lam = grid.eigenvalues
    I = np.abs(_pair_integrals(profile, grid, time_grid))
    coupling = np.abs(bump.matrix_squared) * I
    interaction = 0.5 * float(np.linalg.norm(coupling, 2))
    remainder = 0.5 * float(np.linalg.norm(lam[:, None] * coupling * lam[None, :], 2))
    c = 0.5 * schr_constant
    direct = plate_gramian(grid, bump, time_grid).lambda_min
    return PlateTransfer(c, remainder, interaction, c - interaction, direct)


def eigen_ucp_check(bump: BumpFunction, grid: SpectralGrid) -> float:
    """``min_j ||b e_j||_L2``; zero flags a mode invisible to the observation."""
    d = np.clip(np.diag(bump.matrix_squared), 0.0, None)
    return float(np.sqrt(d.min()))
