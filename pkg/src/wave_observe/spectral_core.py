"""Sine eigenbasis of the 1D Dirichlet Laplacian and the Sobolev scale X^sigma.

Coefficients always refer to the L2-orthonormal basis
``e_j(x) = sqrt(2/L) sin(j pi x / L)``, ``j = 1..N``.  A state of the wave
system is a pair (position, velocity) of such coefficient vectors; its
X^sigma norm weights position by ``(lambda_j + beta)^(1+sigma)`` and velocity
by ``(lambda_j + beta)^sigma``.

Physical samples live on the interior nodes of a uniform grid,
``x_i = i L / (Q + 1)``, ``i = 1..Q``.  On these nodes the sampled sines are
discretely orthogonal (DST-I), so the transform pair is exact for N <= Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SpectralGrid",
    "SobolevIndex",
    "State",
    "eigenvalue",
    "norm_x_sigma",
    "project_low",
    "project_high",
    "to_physical",
    "to_coeffs",
    "multiplication_matrix",
    "random_state",
]


@dataclass(frozen=True)
class SpectralGrid:
    """Truncated sine basis on (0, L).

    Parameters
    ----------
    N : int
        Number of retained modes.
    L : float
        Interval length. With the default ``pi`` the eigenvalues are ``j**2``.
    quad_points : int, optional
        Size Q of the collocation grid. Defaults to ``2 N``, which removes
        every alias of a cubic product of modes ``<= N``.
    beta : float
        Nonnegative shift of the Laplacian, ``A*A = -Delta + beta``.
    """

    N: int
    L: float = math.pi
    quad_points: int | None = None
    beta: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta!r}")
        q = 2 * self.N if self.quad_points is None else int(self.quad_points)
        if q < math.ceil(1.5 * self.N):
            raise ValueError(
                f"quad_points={q} is below the dealiasing floor ceil(3N/2)="
                f"{math.ceil(1.5 * self.N)}"
            )
        object.__setattr__(self, "quad_points", q)

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Dirichlet eigenvalues ``(j pi / L)^2``, j = 1..N."""
        # dividing by L / pi first keeps L = pi exact: lambda_j = j^2
        return (self.modes / (self.L / math.pi)) ** 2

    @cached_property
    def weights(self) -> np.ndarray:
        """Eigenvalues of A*A, i.e. ``lambda_j + beta``."""
        return self.eigenvalues + self.beta

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Wave frequencies ``sqrt(lambda_j + beta)``."""
        return np.sqrt(self.weights)

    @cached_property
    def nodes(self) -> np.ndarray:
        q = self.quad_points
        return np.arange(1, q + 1) * self.L / (q + 1)

    @cached_property
    def node_weight(self) -> float:
        return self.L / (self.quad_points + 1)

    @cached_property
    def synthesis(self) -> np.ndarray:
        """(Q, N) matrix of basis samples ``e_j(x_i)``."""
        x = self.nodes[:, None]
        return math.sqrt(2.0 / self.L) * np.sin(self.modes[None, :] * math.pi * x / self.L)

    @cached_property
    def analysis(self) -> np.ndarray:
        """(N, Q) left inverse of :attr:`synthesis`."""
        return self.node_weight * self.synthesis.T

    def basis_function(self, j: int, x) -> np.ndarray:
        return math.sqrt(2.0 / self.L) * np.sin(j * math.pi * np.asarray(x) / self.L)


@dataclass(frozen=True)
class SobolevIndex:
    sigma: float
    epsilon: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class State:
    """Position and velocity coefficients of one element of X^sigma."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 1 or u.shape != v.shape:
            raise ValueError(f"u and v must be 1D of equal length, got {u.shape} and {v.shape}")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, n: int) -> State:
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_array(cls, arr) -> State:
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0].copy(), arr[1].copy())

    @property
    def size(self) -> int:
        return self.u.size

    def as_array(self) -> np.ndarray:
        return np.stack([self.u, self.v])

    def __add__(self, other: State) -> State:
        return State(self.u + other.u, self.v + other.v)

    def __sub__(self, other: State) -> State:
        return State(self.u - other.u, self.v - other.v)

    def __mul__(self, c: float) -> State:
        return State(c * self.u, c * self.v)

    __rmul__ = __mul__

    def __neg__(self) -> State:
        return State(-self.u, -self.v)


def _check_size(state_or_array, grid: SpectralGrid):
    n = state_or_array.size if isinstance(state_or_array, State) else np.shape(state_or_array)[-1]
    if n != grid.N:
        raise ValueError(f"coefficient length {n} does not match grid truncation N={grid.N}")


def eigenvalue(grid: SpectralGrid, j: int) -> float:
    """Return ``(j pi / L)^2`` for 1 <= j <= N."""
    if not 1 <= j <= grid.N:
        raise IndexError(f"mode index {j} outside 1..{grid.N}")
    return float(grid.eigenvalues[j - 1])


def norm_x_sigma(state, grid: SpectralGrid, sigma: float) -> np.ndarray | float:
    """X^sigma norm of a state, or of an array of states shaped (..., 2, N)."""
    if not 0.0 <= sigma <= 2.0:
        raise ValueError(f"sigma must lie in [0, 2], got {sigma}")
    arr = state.as_array() if isinstance(state, State) else np.asarray(state)
    _check_size(arr, grid)
    w = grid.weights
    sq = (w ** (1.0 + sigma) * arr[..., 0, :] ** 2).sum(-1) + (w**sigma * arr[..., 1, :] ** 2).sum(-1)
    out = np.sqrt(sq)
    return float(out) if out.ndim == 0 else out


def _mask(n: int, size: int, low: bool) -> np.ndarray:
    if not 0 <= n <= size:
        raise ValueError(f"cutoff {n} outside 0..{size}")
    keep = np.arange(1, size + 1) <= n
    return keep if low else ~keep


def project_low(state, n: int):
    """Keep modes 1..n. Accepts a State or an array shaped (..., 2, N)."""
    if isinstance(state, State):
        m = _mask(n, state.size, True)
        return State(state.u * m, state.v * m)
    arr = np.asarray(state)
    return arr * _mask(n, arr.shape[-1], True)


def project_high(state, n: int):
    """Keep modes n+1..N. Accepts a State or an array shaped (..., 2, N)."""
    if isinstance(state, State):
        m = _mask(n, state.size, False)
        return State(state.u * m, state.v * m)
    arr = np.asarray(state)
    return arr * _mask(n, arr.shape[-1], False)


def to_physical(coeffs, grid: SpectralGrid) -> np.ndarray:
    """Synthesize samples on the collocation nodes; works along the last axis."""
    c = np.asarray(coeffs, dtype=float)
    _check_size(c, grid)
    return c @ grid.synthesis.T


def to_coeffs(samples, grid: SpectralGrid) -> np.ndarray:
    """Project collocation samples onto modes 1..N; works along the last axis."""
    s = np.asarray(samples, dtype=float)
    if s.shape[-1] != grid.quad_points:
        raise ValueError(f"expected {grid.quad_points} samples, got {s.shape[-1]}")
    return s @ grid.analysis.T


def multiplication_matrix(samples, grid: SpectralGrid) -> np.ndarray:
    """Galerkin matrix ``<m e_j, e_k>`` of pointwise multiplication by ``m``."""
    m = np.asarray(samples, dtype=float)
    if m.shape != (grid.quad_points,):
        raise ValueError(f"expected {grid.quad_points} samples, got shape {m.shape}")
    S = grid.synthesis
    return grid.node_weight * (S.T * m) @ S


def random_state(grid: SpectralGrid, sigma: float, radius: float, rng: np.random.Generator,
                 decay: float = 2.0, max_mode: int | None = None, fill: bool = False) -> State:
    """Random state with coefficients ~ j^-decay, rescaled into the X^sigma ball.

    The norm is ``radius`` when ``fill`` is true, otherwise ``radius * s`` with
    s uniform in (0, 1]. Modes above ``max_mode`` are left at zero; the draw
    itself does not depend on N, so refinement studies see the same data.
    """
    top = grid.N if max_mode is None else min(max_mode, grid.N)
    j = np.arange(1, top + 1)
    raw = rng.standard_normal((2, top)) * j ** (-decay)
    arr = np.zeros((2, grid.N))
    arr[:, :top] = raw
    scale = 1.0 if fill else 1.0 - rng.random()
    nrm = norm_x_sigma(arr, grid, sigma)
    if nrm == 0.0:
        return State.zeros(grid.N)
    return State.from_array(arr * (radius * scale / nrm))
