"""Velocity observation on a window, observability Gramians and their inverse.

The observation is ``C(u, v) = (0, b v)`` with a smooth bump ``b`` equal to
one on the window.  Gramians are assembled in coordinates where the basis of
the chosen mode range is orthonormal in X^sigma:

* position vector of mode j: ``omega_j^-(1+sigma) e_j``, observed velocity
  ``-sin(omega_j t) omega_j^-sigma e_j``;
* velocity vector of mode j: ``omega_j^-sigma e_j``, observed velocity
  ``cos(omega_j t) omega_j^-sigma e_j``.

With ``K = B D B`` (``B`` the Galerkin matrix of ``b``, ``D`` the X^sigma
velocity weights) the Gramian is the trapezoid sum of ``c_a(t) c_b(t)``
times ``K[j(a), j(b)]``.  The same weights drive the least-squares inverse,
so forward and inverse maps are discretely consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .dynamics import TimeGrid, Trajectory
from .spectral_core import SpectralGrid, State, multiplication_matrix

__all__ = [
    "ObservationWindow",
    "BumpFunction",
    "ObservationSignal",
    "Gramian",
    "NotObservableError",
    "smoothstep",
    "make_bump",
    "constant_bump",
    "observe",
    "observe_array",
    "observe_trajectory",
    "signal_norm",
    "resolve_subspace",
    "assemble_gramian",
    "pseudo_inverse_apply",
    "gcc_time",
    "commutator_check",
]

OBSERVABLE_RTOL = 1e-10


class NotObservableError(RuntimeError):
    """The Gramian is singular to working precision."""


def smoothstep(x, degree: int = 5) -> np.ndarray:
    """Polynomial ramp from 0 (x <= 0) to 1 (x >= 1); C^2 for degree 5, C^3 for 7."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if degree == 5:
        return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)
    if degree == 7:
        return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)
    raise ValueError(f"smoothstep degree must be 5 or 7, got {degree}")


@dataclass(frozen=True)
class ObservationWindow:
    """Disjoint open subintervals of (0, L) on which the bump equals one."""

    intervals: tuple
    plateau_margin: float = 0.25

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if not ivs:
            raise ValueError("observation window is empty")
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"interval ({a}, {b}) is empty")
            if a < 0.0:
                raise ValueError(f"interval ({a}, {b}) leaves the domain")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 < b0:
                raise ValueError("intervals overlap")
        if not self.plateau_margin > 0:
            raise ValueError("plateau_margin must be positive")
        object.__setattr__(self, "intervals", ivs)

    def check_domain(self, L: float):
        if self.intervals[-1][1] > L + 1e-12:
            raise ValueError(f"window {self.intervals} is not contained in (0, {L})")

    def profile(self, x, degree: int = 5) -> np.ndarray:
        """Bump values at ``x``: one on the intervals, ramps of width plateau_margin."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        m = self.plateau_margin
        for a, b in self.intervals:
            rise = smoothstep((x - (a - m)) / m, degree)
            fall = smoothstep(((b + m) - x) / m, degree)
            out = np.maximum(out, np.minimum(rise, fall))
        return out

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hit = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            hit |= (x > a) & (x < b)
        return hit


@dataclass(frozen=True, eq=False)
class BumpFunction:
    """Samples of the observation weight on the collocation nodes of ``grid``."""

    grid: SpectralGrid
    samples: np.ndarray
    window: ObservationWindow | None = None
    degree: int = 5

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != (self.grid.quad_points,):
            raise ValueError(f"bump needs {self.grid.quad_points} samples, got shape {s.shape}")
        if s.min() < 0.0 or s.max() > 1.0:
            raise ValueError("bump samples must lie in [0, 1]")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __call__(self, x) -> np.ndarray:
        """Evaluate off-grid (needs a window, or a constant bump)."""
        if self.window is not None:
            return self.window.profile(x, self.degree)
        if np.ptp(self.samples) == 0.0:
            return np.full(np.shape(x), self.samples[0])
        raise ValueError("off-grid evaluation needs the generating window")

    @cached_property
    def matrix(self) -> np.ndarray:
        """Galerkin matrix of multiplication by b."""
        return multiplication_matrix(self.samples, self.grid)

    @cached_property
    def matrix_squared(self) -> np.ndarray:
        """Galerkin matrix of multiplication by b^2 (exact L2 norm of b psi)."""
        return multiplication_matrix(self.samples**2, self.grid)


def make_bump(window: ObservationWindow, grid: SpectralGrid, degree: int = 5) -> BumpFunction:
    window.check_domain(grid.L)
    return BumpFunction(grid, window.profile(grid.nodes, degree), window, degree)


def constant_bump(grid: SpectralGrid, value: float = 1.0) -> BumpFunction:
    return BumpFunction(grid, np.full(grid.quad_points, float(value)))


@dataclass(frozen=True, eq=False)
class ObservationSignal:
    """Observed output ``C U(t_m)`` on every node; positions are identically zero."""

    time_grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != self.time_grid.M + 1 or arr.shape[1] != 2:
            raise ValueError(f"expected shape ({self.time_grid.M + 1}, 2, N), got {arr.shape}")
        if np.any(arr[:, 0, :] != 0.0):
            raise ValueError("observation signals have zero position component")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_velocity(cls, time_grid: TimeGrid, vel) -> ObservationSignal:
        vel = np.asarray(vel, dtype=float)
        arr = np.zeros((vel.shape[0], 2, vel.shape[1]))
        arr[:, 1, :] = vel
        return cls(time_grid, arr)

    @property
    def velocity(self) -> np.ndarray:
        return self.values[:, 1, :]

    def __len__(self) -> int:
        return self.values.shape[0]

    def __add__(self, other: ObservationSignal) -> ObservationSignal:
        return ObservationSignal(self.time_grid, self.values + other.values)

    def __sub__(self, other: ObservationSignal) -> ObservationSignal:
        return ObservationSignal(self.time_grid, self.values - other.values)

    def __mul__(self, c: float) -> ObservationSignal:
        return ObservationSignal(self.time_grid, c * self.values)

    __rmul__ = __mul__


def observe_array(arr, bump: BumpFunction) -> np.ndarray:
    """Observation of states shaped (..., 2, N), same shape out."""
    arr = np.asarray(arr, dtype=float)
    out = np.zeros_like(arr)
    out[..., 1, :] = arr[..., 1, :] @ bump.matrix.T
    return out


def observe(state: State, bump: BumpFunction) -> State:
    """``C(u, v) = (0, P_N(b v))``."""
    return State(np.zeros(state.size), bump.matrix @ state.v)


def observe_trajectory(traj, bump: BumpFunction, time_grid: TimeGrid | None = None) -> ObservationSignal:
    if isinstance(traj, Trajectory):
        time_grid, traj = traj.time_grid, traj.states
    return ObservationSignal(time_grid, observe_array(traj, bump))


def signal_norm(signal, grid: SpectralGrid, sigma: float, time_grid: TimeGrid | None = None) -> float:
    """Discrete ``L^2(0, T; X^sigma)`` norm with trapezoid weights.

    Accepts an ObservationSignal, a Trajectory, or an (M+1, 2, N) array.
    """
    if isinstance(signal, (ObservationSignal, Trajectory)):
        time_grid = signal.time_grid
        arr = signal.values if isinstance(signal, ObservationSignal) else signal.states
    else:
        arr = np.asarray(signal)
    w = grid.weights
    sq = (w ** (1 + sigma) * arr[:, 0] ** 2).sum(-1) + (w**sigma * arr[:, 1] ** 2).sum(-1)
    return float(math.sqrt(time_grid.weights @ sq))


def resolve_subspace(subspace, N: int) -> tuple[int, int]:
    """Normalize a mode range to an inclusive 1-based pair.

    ``None`` or ``"full"`` means 1..N; an integer n means n+1..N.
    """
    if subspace is None or subspace == "full":
        lo, hi = 1, N
    elif isinstance(subspace, (int, np.integer)):
        lo, hi = int(subspace) + 1, N
    else:
        lo, hi = (int(s) for s in subspace)
    if not 1 <= lo <= hi <= N:
        raise ValueError(f"mode range {lo}..{hi} not inside 1..{N}")
    return lo, hi


@dataclass(frozen=True, eq=False)
class Gramian:
    """Observation Gramian on a mode range with its symmetric eigensolve.

    For the wave observation the coordinates are the X^sigma-orthonormal
    positions of modes lo..hi followed by the velocities of the same modes;
    the context fields (grid, bump, time grid, time functions) are what the
    least-squares inverse needs.  Other Gramians leave them unset.
    """

    subspace: tuple[int, int]
    sigma: float
    T: float
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    grid: SpectralGrid | None = None
    bump: BumpFunction | None = None
    time_grid: TimeGrid | None = None
    time_functions: np.ndarray | None = field(default=None, repr=False)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def observable(self) -> bool:
        return self.lambda_min > OBSERVABLE_RTOL * max(self.lambda_max, 0.0)

    @property
    def c_obs(self) -> float:
        """Observability constant ``lambda_min^-1/2`` (inf when not observable)."""
        return self.lambda_min ** -0.5 if self.observable else math.inf

    @property
    def modes(self) -> np.ndarray:
        lo, hi = self.subspace
        return np.arange(lo, hi + 1)

    @property
    def scales(self) -> np.ndarray:
        """Coefficient of e_j carried by each orthonormal coordinate."""
        om = self.grid.frequencies[self.modes - 1]
        return np.concatenate([om ** -(1 + self.sigma), om**-self.sigma])

    def to_state_array(self, alpha) -> np.ndarray:
        """Map coordinates (..., 2k) to coefficient arrays (..., 2, N)."""
        alpha = np.asarray(alpha)
        k = self.modes.size
        sc = self.scales * alpha
        out = np.zeros(alpha.shape[:-1] + (2, self.grid.N))
        out[..., 0, self.modes - 1] = sc[..., :k]
        out[..., 1, self.modes - 1] = sc[..., k:]
        return out

    def to_coordinates(self, arr) -> np.ndarray:
        """Inverse of :meth:`to_state_array` on the mode range."""
        arr = np.asarray(arr)
        idx = self.modes - 1
        raw = np.concatenate([arr[..., 0, idx], arr[..., 1, idx]], axis=-1)
        return raw / self.scales


def _time_functions(omega_sub, sigma, times) -> np.ndarray:
    wt = np.multiply.outer(times, omega_sub)
    amp = omega_sub**-sigma
    return np.concatenate([-np.sin(wt) * amp, np.cos(wt) * amp], axis=1)


def assemble_gramian(grid: SpectralGrid, bump: BumpFunction, time_grid: TimeGrid, sigma: float,
                     subspace=None) -> Gramian:
    """Trapezoid observability Gramian of ``W -> C exp(tA) W`` on a mode range."""
    if bump.grid != grid:
        raise ValueError("bump was built on a different grid")
    if not 0.0 <= sigma <= 2.0:
        raise ValueError(f"sigma must lie in [0, 2], got {sigma}")
    lo, hi = resolve_subspace(subspace, grid.N)
    modes = np.arange(lo, hi + 1)
    omega = grid.frequencies
    B = bump.matrix
    K = (B * omega ** (2 * sigma)) @ B
    c = _time_functions(omega[modes - 1], sigma, time_grid.times)
    temporal = (c * time_grid.weights[:, None]).T @ c
    idx = np.concatenate([modes, modes]) - 1
    G = temporal * K[np.ix_(idx, idx)]
    G = 0.5 * (G + G.T)
    evals, evecs = scipy.linalg.eigh(G)
    return Gramian((lo, hi), float(sigma), time_grid.T, G, evals, evecs, grid, bump, time_grid, c)


def pseudo_inverse_apply(gramian: Gramian, signal: ObservationSignal, grid: SpectralGrid,
                         time_grid: TimeGrid, sigma: float) -> State:
    """Least-squares initial state in the Gramian's range matching ``signal``.

    Solves the normal equations, which is the pseudo-inverse of the
    observation map restricted to the mode range.
    """
    if grid != gramian.grid:
        raise ValueError("grid differs from the Gramian's grid")
    if time_grid != gramian.time_grid or signal.time_grid != time_grid:
        raise ValueError("signal, Gramian and time grid must share one time grid")
    if sigma != gramian.sigma:
        raise ValueError(f"sigma={sigma} but the Gramian was assembled at {gramian.sigma}")
    return State.from_array(_pseudo_inverse(gramian, signal.velocity))


def _pseudo_inverse(gramian: Gramian, velocity) -> np.ndarray:
    """Core of :func:`pseudo_inverse_apply` on raw velocity arrays (M+1, N)."""
    if not gramian.observable:
        raise NotObservableError(
            f"Gramian on modes {gramian.subspace} is singular "
            f"(lambda_min={gramian.lambda_min:.3e}, lambda_max={gramian.lambda_max:.3e})"
        )
    grid = gramian.grid
    B = gramian.bump.matrix
    proj = (np.asarray(velocity) * grid.weights**gramian.sigma) @ B  # rows: (B D y_m)^T
    idx = np.concatenate([gramian.modes, gramian.modes]) - 1
    rhs = np.einsum("m,ma,ma->a", gramian.time_grid.weights, gramian.time_functions, proj[:, idx])
    V, lam = gramian.eigenvectors, gramian.eigenvalues
    alpha = V @ ((V.T @ rhs) / lam)
    return gramian.to_state_array(alpha)


def gcc_time(window: ObservationWindow, L: float = math.pi, samples: int = 10_000) -> float:
    """Longest first-entry time into the window over all reflected unit-speed rays.

    Rays are unfolded onto the 2L-periodic line, where an interval (a, b)
    has the images ``(a, b) + 2kL`` and ``(2L - b, 2L - a) + 2kL``.  A ray
    moving left from y is the ray moving right from 2L - y.
    """
    if not window.intervals:
        raise ValueError("observation window is empty")
    window.check_domain(L)
    edges = np.array([e for iv in window.intervals for e in iv])
    starts = np.unique(np.concatenate([np.linspace(0.0, L, samples), edges[(edges >= 0) & (edges <= L)]]))
    period = 2.0 * L
    lefts = []
    for a, b in window.intervals:
        lefts.append((a, b))
        lefts.append((period - b, period - a))
    worst = 0.0
    for y0 in (starts, period - starts):
        best = np.full(y0.shape, np.inf)
        for a, b in lefts:
            for k in (-1, 0, 1, 2):
                lo, hi = a + k * period, b + k * period
                inside = (y0 > lo) & (y0 < hi)
                ahead = lo >= y0
                t = np.where(inside, 0.0, np.where(ahead, lo - y0, np.inf))
                best = np.minimum(best, t)
        worst = max(worst, float(best.max()))
    return worst


def commutator_check(bump: BumpFunction, grid: SpectralGrid, sigma: float, epsilon: float) -> float:
    """Operator norm of ``[b, Delta]`` from H^(sigma+2)_D to H^(sigma+eps)_D on the truncation.

    In the eigenbasis the commutator has entries ``(lambda_k - lambda_j) B_kj``.
    """
    if not 0.0 <= sigma <= 1.0 or sigma == 0.5:
        raise ValueError(f"sigma must lie in [0, 1] without 1/2, got {sigma}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    lam = grid.eigenvalues
    M = (lam[:, None] - lam[None, :]) * bump.matrix
    weighted = (lam[:, None] ** ((sigma + epsilon) / 2)) * M * (lam[None, :] ** (-(sigma + 2) / 2))
    return float(np.linalg.norm(weighted, 2))
