"""Reconstruction of high frequencies from low frequencies plus observation.

``linear_reconstruct`` solves the observed Cauchy problem on the
high-frequency range: find W with ``dW/dt = AW + Q_n H`` whose observation
matches G in the least-squares sense.  It is the building block of the
nonlinear map ``Phi(W) = F_L(G, F(W + V + H1) + H2)``, solved by Picard
iteration from ``W = 0``.

All trajectories are handled as arrays shaped (M+1, 2, N); the public
functions accept Trajectory objects, plain arrays, single States (held
constant in time) or ``None`` (zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import (
    TimeGrid,
    Trajectory,
    WaveSystem,
    apply_F_array,
    duhamel_all,
    propagate_array,
)
from .observability import (
    Gramian,
    ObservationSignal,
    _pseudo_inverse,
    observe_array,
    signal_norm,
    smoothstep,
)
from .spectral_core import SpectralGrid, State, norm_x_sigma, project_high, random_state

__all__ = [
    "ObservationSignal",
    "ReconstructionConfig",
    "FixedPointReport",
    "FixedPointError",
    "FixedPointDivergence",
    "MaxIterationsExceeded",
    "BallViolationError",
    "DeterminingThreshold",
    "cutoff",
    "sup_norm",
    "linear_reconstruct",
    "linear_estimate_constant",
    "observation_operator_norm",
    "phi_step",
    "solve_fixed_point",
    "reconstruct_high",
    "determining_threshold",
    "uniqueness_check",
    "empirical_lipschitz",
    "threshold_bound",
]


class BallViolationError(ValueError):
    """The argument of F left the ball where its Lipschitz bound was measured."""


class FixedPointError(RuntimeError):
    """Picard iteration failed; the report is attached."""

    def __init__(self, message: str, report: FixedPointReport, iterate: Trajectory | None = None):
        super().__init__(message)
        self.report = report
        self.iterate = iterate


class FixedPointDivergence(FixedPointError):
    """Residuals grew over five consecutive iterations."""


class MaxIterationsExceeded(FixedPointError):
    """Tolerance not reached within ``max_iter`` iterations."""


@dataclass(frozen=True)
class ReconstructionConfig:
    """Parameters of the high-frequency reconstruction.

    ``eta=None`` selects ``0.1 R0 / c_obs`` from the Gramian in use.
    ``lipschitz=None`` makes the solver estimate the Lipschitz constant of F
    from 200 random pairs in the ball of radius 3 R0.
    """

    n: int
    sigma: float
    R0: float = 0.5
    eta: float | None = None
    fp_tol: float = 1e-10
    max_iter: int = 200
    epsilon: float = 1.0
    lipschitz: float | None = None
    lipschitz_seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not self.R0 > 0:
            raise ValueError("R0 must be positive")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")

    def resolved_eta(self, gramian: Gramian) -> float:
        return self.eta if self.eta is not None else 0.1 * self.R0 / gramian.c_obs


@dataclass
class FixedPointReport:
    iterations: int
    residuals: list = field(default_factory=list)
    contraction_estimate: float = math.nan
    converged: bool = False
    threshold_bound: float = math.nan
    lipschitz: float = math.nan
    solution_norm: float = math.nan


class DeterminingThreshold(NamedTuple):
    n: int
    overflow: bool


def cutoff(s) -> np.ndarray:
    """Even quintic cutoff: 1 on [-1/2, 1/2], 0 outside (-1, 1)."""
    return 1.0 - smoothstep(2.0 * np.abs(np.asarray(s, dtype=float)) - 1.0)


def sup_norm(arr, grid: SpectralGrid, sigma: float) -> float:
    """``max_t ||U(t)||_{X^sigma}`` of an (M+1, 2, N) array."""
    return float(np.max(norm_x_sigma(np.asarray(arr), grid, sigma)))


def _as_array(x, time_grid: TimeGrid, N: int) -> np.ndarray:
    shape = (time_grid.M + 1, 2, N)
    if x is None:
        return np.zeros(shape)
    if isinstance(x, Trajectory):
        if x.time_grid != time_grid:
            raise ValueError("trajectory lives on a different time grid")
        return x.states
    if isinstance(x, ObservationSignal):
        if x.time_grid != time_grid:
            raise ValueError("signal lives on a different time grid")
        return x.values
    if isinstance(x, State):
        return np.broadcast_to(x.as_array(), shape)
    arr = np.asarray(x, dtype=float)
    if arr.shape == (2, N):
        return np.broadcast_to(arr, shape)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    return arr


def _check_gramian(config: ReconstructionConfig, gramian: Gramian):
    N = gramian.grid.N
    if gramian.subspace != (config.n + 1, N):
        raise ValueError(
            f"Gramian covers modes {gramian.subspace}, cutoff n={config.n} needs {(config.n + 1, N)}"
        )
    if gramian.sigma != config.sigma:
        raise ValueError(f"Gramian sigma {gramian.sigma} differs from config sigma {config.sigma}")


def _linear_core(G_vel, H, n: int, gramian: Gramian) -> np.ndarray:
    """F_L on raw arrays: G velocity (M+1, N), source H (M+1, 2, N)."""
    grid, tg = gramian.grid, gramian.time_grid
    QH = project_high(H, n)
    I = duhamel_all(QH, tg, grid)
    residual = G_vel - observe_array(I, gramian.bump)[:, 1, :]
    W0 = _pseudo_inverse(gramian, residual)
    return propagate_array(W0, tg.times, grid.frequencies) + I


def linear_reconstruct(G: ObservationSignal, H, config: ReconstructionConfig, gramian: Gramian) -> Trajectory:
    """Observed Cauchy solver ``F_L(G, H)`` on the high-frequency range.

    ``W(0)`` is the least-squares fit of ``G - C I(Q_n H)`` over the range of
    the high-frequency observation map; ``W(t) = exp(tA) W(0) + I(t) Q_n H``.
    """
    _check_gramian(config, gramian)
    tg = gramian.time_grid
    if G.time_grid != tg:
        raise ValueError("signal and Gramian use different time grids")
    H = _as_array(H, tg, gramian.grid.N)
    return Trajectory(tg, _linear_core(G.velocity, H, config.n, gramian))


def observation_operator_norm(gramian: Gramian) -> float:
    """Norm of C on X^sigma: the spectral norm of ``D^1/2 B D^-1/2``."""
    d = gramian.grid.weights ** (gramian.sigma / 2)
    return float(np.linalg.norm(d[:, None] * gramian.bump.matrix / d[None, :], 2))


def linear_estimate_constant(gramian: Gramian) -> float:
    """Constant K with ``||F_L(G,H)||_{C0} <= K (||G||_{L2} + ||Q_n H||_{L1})``.

    From the construction: ``||W(0)|| <= c_obs (||G|| + sqrt(T) ||C|| ||Q_n H||_{L1})``
    and the Duhamel term adds ``||Q_n H||_{L1}``.
    """
    c = gramian.c_obs
    return max(c, 1.0 + math.sqrt(gramian.T) * c * observation_operator_norm(gramian))


def _ball_check(arg, grid, sigma, R0):
    size = sup_norm(arg, grid, sigma)
    if size > 4.0 * R0 * (1 + 1e-12):
        raise BallViolationError(
            f"sup_t ||W + V + H1||_X^sigma = {size:.6g} exceeds the certified radius 4 R0 = {4 * R0:.6g}"
        )


def _phi(W, V_H1, H2, G_vel, config, gramian, system, check=True) -> np.ndarray:
    arg = W + V_H1
    if check:
        _ball_check(arg, gramian.grid, config.sigma, config.R0)
    src = np.zeros_like(arg)
    src[:, 1, :] = apply_F_array(arg, system)
    return _linear_core(G_vel, src + H2, config.n, gramian)


def phi_step(W, V, H1, H2, G: ObservationSignal, config: ReconstructionConfig, gramian: Gramian,
             system: WaveSystem) -> Trajectory:
    """One application of ``Phi(W) = F_L(G, F(W + V + H1) + H2)``."""
    _check_gramian(config, gramian)
    tg, N = gramian.time_grid, gramian.grid.N
    arrs = [_as_array(x, tg, N) for x in (W, V, H1, H2)]
    out = _phi(arrs[0], arrs[1] + arrs[2], arrs[3], G.velocity, config, gramian, system)
    return Trajectory(tg, out)


def threshold_bound(lipschitz: float, T: float, epsilon: float, grid: SpectralGrid, n: int) -> float:
    """A priori contraction bound ``C T / (1 + lambda_{n+1})^epsilon``."""
    if n >= grid.N:
        return 0.0
    return float(lipschitz * T / (1.0 + grid.eigenvalues[n]) ** epsilon)


def empirical_lipschitz(system: WaveSystem, sigma: float, epsilon: float, radius: float,
                        pairs: int = 200, seed: int = 0) -> float:
    """Largest observed ``||F(U)-F(V)||_{X^(sigma+eps)} / ||U-V||_{X^sigma}`` in a ball."""
    grid = system.grid
    rng = np.random.default_rng(seed)
    U = np.stack([random_state(grid, sigma, radius, rng).as_array() for _ in range(pairs)])
    V = np.stack([random_state(grid, sigma, radius, rng).as_array() for _ in range(pairs)])
    dF = np.zeros_like(U)
    dF[:, 1, :] = apply_F_array(U, system) - apply_F_array(V, system)
    num = norm_x_sigma(dF, grid, sigma + epsilon)
    den = norm_x_sigma(U - V, grid, sigma)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0


def _contraction(residuals, scale) -> float:
    floor = 1e-11 * (1.0 + scale)
    r = np.asarray(residuals)
    ratios = [r[k + 1] / r[k] for k in range(len(r) - 1) if r[k] > floor and r[k + 1] > floor]
    if not ratios:
        return 0.0
    return float(np.exp(np.mean(np.log(ratios))))


def _lipschitz_for(config: ReconstructionConfig, system: WaveSystem) -> float:
    if config.lipschitz is not None:
        return config.lipschitz
    return empirical_lipschitz(system, config.sigma, config.epsilon, 3.0 * config.R0,
                               seed=config.lipschitz_seed)


def solve_fixed_point(V, H1, H2, G: ObservationSignal, config: ReconstructionConfig, gramian: Gramian,
                      system: WaveSystem, initial=None, raise_on_failure: bool = True,
                      check_ball: bool = True) -> tuple[Trajectory, FixedPointReport]:
    """Picard iteration of ``Phi`` from ``initial`` (default zero).

    ``residuals[k] = sup_t ||W^(k+1) - W^k||_X^sigma``; the iteration stops at
    the first k with ``residuals[k] <= fp_tol (1 + sup_t ||W^(k+1)||)`` and
    reports ``iterations = k``, the number of maps taken to reach the limit.
    """
    _check_gramian(config, gramian)
    grid, tg = gramian.grid, gramian.time_grid
    if G.time_grid != tg:
        raise ValueError("signal and Gramian use different time grids")
    N = grid.N
    V_H1 = _as_array(V, tg, N) + _as_array(H1, tg, N)
    H2 = _as_array(H2, tg, N)
    W = np.zeros((tg.M + 1, 2, N)) if initial is None else np.array(_as_array(initial, tg, N))
    lip = _lipschitz_for(config, system)
    report = FixedPointReport(
        iterations=0,
        threshold_bound=threshold_bound(lip, tg.T, config.epsilon, grid, config.n),
        lipschitz=lip,
    )
    rising = 0
    for k in range(config.max_iter):
        W_next = _phi(W, V_H1, H2, G.velocity, config, gramian, system, check_ball)
        res = sup_norm(W_next - W, grid, config.sigma)
        size = sup_norm(W_next, grid, config.sigma)
        report.residuals.append(res)
        W = W_next
        if not np.isfinite(res):
            rising = 5
        elif len(report.residuals) > 1 and res > report.residuals[-2]:
            rising += 1
        else:
            rising = 0
        report.solution_norm = size
        report.contraction_estimate = _contraction(report.residuals, size)
        if res <= config.fp_tol * (1.0 + size):
            report.converged = True
            report.iterations = k
            break
        if rising >= 5:
            report.iterations = k + 1
            if raise_on_failure:
                raise FixedPointDivergence(
                    f"residual grew over 5 consecutive iterations (last {res:.3e})", report, Trajectory(tg, W)
                )
            break
    else:
        report.iterations = config.max_iter
        if raise_on_failure:
            raise MaxIterationsExceeded(
                f"no convergence in {config.max_iter} iterations (last residual {report.residuals[-1]:.3e})",
                report,
                Trajectory(tg, W),
            )
    return Trajectory(tg, W), report


def reconstruct_high(V, H1, H2, config: ReconstructionConfig, gramian: Gramian, system: WaveSystem,
                     return_report: bool = False, **kwargs):
    """High frequencies of a solution whose observation vanishes.

    The observation of the high part must equal ``-C V``; the signal is
    ``G = -cutoff(||C V|| / eta) C V`` so it always stays in the small ball.
    """
    _check_gramian(config, gramian)
    tg, grid = gramian.time_grid, gramian.grid
    V_arr = _as_array(V, tg, grid.N)
    CV = observe_array(V_arr, gramian.bump)
    eta = config.resolved_eta(gramian)
    scale = float(cutoff(signal_norm(CV, grid, config.sigma, tg) / eta))
    G = ObservationSignal(tg, -scale * CV if scale else np.zeros_like(CV))
    W, report = solve_fixed_point(V_arr, H1, H2, G, config, gramian, system, **kwargs)
    return (W, report) if return_report else W


def determining_threshold(lipschitz_C: float, T: float, epsilon: float, grid: SpectralGrid) -> DeterminingThreshold:
    """Smallest n with ``C T (1 + lambda_{n+1})^-eps < 1``; overflow when none fits below N."""
    if not lipschitz_C > 0:
        raise ValueError("lipschitz_C must be positive")
    if not T > 0 or epsilon < 0:
        raise ValueError("T must be positive and epsilon nonnegative")
    ratios = lipschitz_C * T / (1.0 + grid.eigenvalues) ** epsilon
    hits = np.nonzero(ratios < 1.0)[0]
    if hits.size == 0:
        return DeterminingThreshold(grid.N, True)
    return DeterminingThreshold(int(hits[0]), False)


def uniqueness_check(V, H1, H2, G: ObservationSignal, config: ReconstructionConfig, gramian: Gramian,
                     system: WaveSystem, trials: int = 5, seed: int = 0) -> float:
    """Largest sup-t X^sigma distance between fixed points from distinct starts.

    The first trial starts from zero; the others from free high-frequency
    waves of random size inside the R0 ball.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    grid, tg = gramian.grid, gramian.time_grid
    rng = np.random.default_rng(seed)
    sols = []
    for t in range(trials):
        if t == 0:
            init = None
        else:
            W0 = project_high(random_state(grid, config.sigma, config.R0, rng, decay=0.0, fill=False), config.n)
            init = propagate_array(W0.as_array(), tg.times, grid.frequencies)
        W, _ = solve_fixed_point(V, H1, H2, G, config, gramian, system, initial=init)
        sols.append(W.states)
    dist = 0.0
    for a in range(trials):
        for b in range(a + 1, trials):
            dist = max(dist, sup_norm(sols[a] - sols[b], grid, config.sigma))
    return dist
