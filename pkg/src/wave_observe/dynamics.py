"""Linear wave group, the semilinear source F, Duhamel integrals and time stepping.

The linear group acts on each mode as a rotation.  Writing
``z_j = omega_j u_j + i v_j`` with ``omega_j = sqrt(lambda_j + beta)``, the
flow is ``z(t) = exp(-i omega t) z(0)`` and the X^sigma norm squared is
``sum omega^(2 sigma) |z|^2``.  Everything below works on arrays shaped
``(..., 2, N)`` so that batches of states move together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spectral_core import SpectralGrid, State, to_coeffs, to_physical

__all__ = [
    "Polynomial",
    "WaveSystem",
    "TimeGrid",
    "Trajectory",
    "IntegrationError",
    "linear_propagate",
    "propagate_array",
    "to_complex",
    "from_complex",
    "apply_F",
    "apply_F_array",
    "duhamel",
    "duhamel_all",
    "integrate",
    "integrate_array",
    "energy",
]


class IntegrationError(RuntimeError):
    """Raised when the time stepper produces nonfinite values."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class Polynomial:
    """``f(s) = sum_k coeffs[k] s^k`` with ``coeffs[0] == 0``."""

    coeffs: tuple = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs) or (0.0,)
        if c[0] != 0.0:
            raise ValueError("the nonlinearity must vanish at zero (constant coefficient != 0)")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls) -> Polynomial:
        return cls((0.0,))

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def __call__(self, s):
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def derivative(self, s):
        return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coeffs))

    def primitive(self, s):
        """Antiderivative vanishing at zero."""
        return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyint(self.coeffs))

    def is_defocusing(self, span: float = 10.0) -> bool:
        s = np.linspace(-span, span, 2001)
        return bool(np.all(s * self(s) >= -1e-14))


@dataclass(frozen=True)
class WaveSystem:
    """Semilinear wave ``u_tt = Delta u - chi_tilde f(u)`` on the grid.

    ``chi_tilde`` holds samples on the collocation nodes; ``None`` means 1.
    The shift ``beta`` is taken from the grid.
    """

    grid: SpectralGrid
    f: Polynomial = field(default_factory=Polynomial)
    chi_tilde: np.ndarray | None = None

    def __post_init__(self):
        if self.chi_tilde is None:
            chi = np.ones(self.grid.quad_points)
        else:
            chi = np.asarray(self.chi_tilde, dtype=float)
        if chi.shape != (self.grid.quad_points,):
            raise ValueError(f"chi_tilde needs {self.grid.quad_points} samples, got shape {chi.shape}")
        if chi.min() < 0.0 or chi.max() > 1.0:
            raise ValueError("chi_tilde samples must lie in [0, 1]")
        chi = chi.copy()
        chi.setflags(write=False)
        object.__setattr__(self, "chi_tilde", chi)

    @property
    def beta(self) -> float:
        return self.grid.beta

    @property
    def is_linear(self) -> bool:
        return self.f.is_zero and self.beta == 0.0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_m = m T / M`` on [0, T] with trapezoid weights."""

    T: float
    M: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.M + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on every node of a time grid, stored as an (M+1, 2, N) array."""

    time_grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != self.time_grid.M + 1 or arr.shape[1] != 2:
            raise ValueError(f"expected shape ({self.time_grid.M + 1}, 2, N), got {arr.shape}")
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, m: int) -> State:
        return State.from_array(self.states[m])

    @classmethod
    def zeros(cls, time_grid: TimeGrid, n_modes: int) -> Trajectory:
        return cls(time_grid, np.zeros((time_grid.M + 1, 2, n_modes)))

    def __add__(self, other: Trajectory) -> Trajectory:
        return Trajectory(self.time_grid, self.states + other.states)

    def __sub__(self, other: Trajectory) -> Trajectory:
        return Trajectory(self.time_grid, self.states - other.states)


def _omega(grid: SpectralGrid, beta: float | None) -> np.ndarray:
    if beta is None or beta == grid.beta:
        return grid.frequencies
    return np.sqrt(grid.eigenvalues + beta)


def to_complex(arr, omega) -> np.ndarray:
    arr = np.asarray(arr)
    return omega * arr[..., 0, :] + 1j * arr[..., 1, :]


def from_complex(z, omega) -> np.ndarray:
    return np.stack([z.real / omega, z.imag], axis=-2)


def propagate_array(arr, t, omega) -> np.ndarray:
    """Apply the rotation group to states shaped (..., 2, N).

    ``t`` may be a scalar or a 1D array; in the latter case a leading time
    axis is added to the output.
    """
    z = to_complex(arr, omega)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return from_complex(np.exp(-1j * omega * t) * z, omega)
    phase = np.exp(-1j * np.multiply.outer(t, omega))
    phase = phase.reshape(t.shape + (1,) * (z.ndim - 1) + omega.shape)
    return from_complex(phase * z, omega)


def linear_propagate(state: State, t: float, grid: SpectralGrid, beta: float | None = None) -> State:
    """Exact linear flow ``exp(tA)`` applied to one state."""
    omega = _omega(grid, beta)
    c, s = np.cos(omega * t), np.sin(omega * t)
    return State(c * state.u + s / omega * state.v, -omega * s * state.u + c * state.v)


def apply_F_array(arr, system: WaveSystem) -> np.ndarray:
    """Velocity coefficients of ``-chi_tilde f(u) + beta u`` for states (..., 2, N)."""
    u = np.asarray(arr)[..., 0, :]
    if system.f.is_zero:
        g = np.zeros_like(u)
    else:
        phys = to_physical(u, system.grid)
        g = -to_coeffs(system.chi_tilde * system.f(phys), system.grid)
    if system.beta:
        g = g + system.beta * u
    return g


def apply_F(state: State, system: WaveSystem) -> State:
    """The semilinear source ``F(u, v) = (0, -chi_tilde f(u) + beta u)``."""
    return State(np.zeros(state.size), apply_F_array(state.as_array(), system))


def duhamel_all(source, time_grid: TimeGrid, grid: SpectralGrid, beta: float | None = None) -> np.ndarray:
    """Trapezoid approximation of ``int_0^t exp((t-s)A) g(s) ds`` at every node.

    ``source`` has shape (M+1, ..., 2, N); the result has the same shape.
    """
    g = np.asarray(source, dtype=float)
    if g.shape[0] != time_grid.M + 1:
        raise ValueError(f"source has {g.shape[0]} time slices, grid needs {time_grid.M + 1}")
    omega = _omega(grid, beta)
    t = time_grid.times.reshape((-1,) + (1,) * (g.ndim - 2))
    h = np.exp(1j * omega * t) * to_complex(g, omega)
    cs = np.cumsum(h, axis=0)
    acc = time_grid.dt * (cs - 0.5 * (h[:1] + h))
    return from_complex(np.exp(-1j * omega * t) * acc, omega)


def duhamel(source, t_index: int, grid: SpectralGrid, time_grid: TimeGrid | None = None,
            beta: float | None = None) -> State:
    """Trapezoid Duhamel integral up to node ``t_index``.

    ``source`` is a Trajectory or an (M+1, 2, N) array; for a bare array the
    time grid must be supplied.
    """
    if isinstance(source, Trajectory):
        time_grid = source.time_grid
        source = source.states
    if time_grid is None:
        raise ValueError("time_grid is required when the source is a plain array")
    if not 0 <= t_index <= time_grid.M:
        raise IndexError(f"t_index {t_index} outside 0..{time_grid.M}")
    return State.from_array(duhamel_all(source, time_grid, grid, beta)[t_index])


def integrate_array(U0, system: WaveSystem, time_grid: TimeGrid, scheme: str = "strang") -> np.ndarray:
    """Integrate one or many states (..., 2, N); returns (M+1, ..., 2, N).

    ``scheme="strang"`` is drift-kick-drift splitting. ``"duhamel-trapezoid"``
    is the kick-drift-kick ordering, whose output equals the trapezoid
    Duhamel formula at every node (the velocity-only source makes the implicit
    end point explicit).
    """
    if scheme not in ("strang", "duhamel-trapezoid"):
        raise ValueError(f"unknown scheme {scheme!r}")
    grid = system.grid
    omega = grid.frequencies
    dt = time_grid.dt
    U = np.array(U0, dtype=float)
    out = np.empty((time_grid.M + 1,) + U.shape)
    out[0] = U
    linear = system.f.is_zero and system.beta == 0.0
    if scheme == "strang":
        half = np.exp(-0.5j * omega * dt)
        full = half * half
        for m in range(time_grid.M):
            z = to_complex(U, omega)
            if linear:
                z = full * z
            else:
                z = half * z
                Uh = from_complex(z, omega)
                z = z + 1j * dt * apply_F_array(Uh, system)
                z = half * z
            U = from_complex(z, omega)
            if not np.all(np.isfinite(U)):
                raise IntegrationError(f"nonfinite state at step {m + 1}", m + 1)
            out[m + 1] = U
    else:
        full = np.exp(-1j * omega * dt)
        kick = 0.5 * dt
        g = apply_F_array(U, system)
        for m in range(time_grid.M):
            z = full * (to_complex(U, omega) + 1j * kick * g)
            U = from_complex(z, omega)
            g = apply_F_array(U, system)
            U[..., 1, :] += kick * g
            if not np.all(np.isfinite(U)):
                raise IntegrationError(f"nonfinite state at step {m + 1}", m + 1)
            out[m + 1] = U
    return out


def integrate(U0: State, system: WaveSystem, time_grid: TimeGrid, scheme: str = "strang") -> Trajectory:
    """Semilinear trajectory ``dU/dt = AU + F(U)`` from ``U0``."""
    return Trajectory(time_grid, integrate_array(U0.as_array(), system, time_grid, scheme))


def energy(state, system: WaveSystem) -> np.ndarray | float:
    """Conserved energy ``1/2 (|grad u|^2 + |v|^2) + int chi_tilde f_prim(u)``.

    Written through the X^0 norm this is
    ``1/2 ||U||_{X^0}^2 - beta/2 ||u||^2 + int chi_tilde f_prim(u)``.
    """
    arr = state.as_array() if isinstance(state, State) else np.asarray(state)
    grid = system.grid
    u, v = arr[..., 0, :], arr[..., 1, :]
    quad = (grid.eigenvalues * u**2).sum(-1) + (v**2).sum(-1)
    e = 0.5 * quad
    if not system.f.is_zero:
        phys = to_physical(u, grid)
        e = e + grid.node_weight * (system.chi_tilde * system.f.primitive(phys)).sum(-1)
    out = np.asarray(e)
    return float(out) if out.ndim == 0 else out
