"""End-to-end studies built from the library pieces.

Each study returns an :class:`ExperimentResult`: named scalars, named
series for CSV output, and declared checks on the scalars that alone decide
the verdict.
"""

from __future__ import annotations

import math
import operator
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize

from ._workers import worker_count
from .dynamics import (
    Polynomial,
    TimeGrid,
    WaveSystem,
    apply_F_array,
    duhamel_all,
    integrate_array,
)
from .observability import (
    BumpFunction,
    ObservationWindow,
    assemble_gramian,
    gcc_time,
    make_bump,
    observe_array,
    signal_norm,
)
from .reconstruction import (
    BallViolationError,
    FixedPointError,
    ReconstructionConfig,
    linear_estimate_constant,
    reconstruct_high,
    sup_norm,
)
from .spectral_core import (
    SpectralGrid,
    State,
    multiplication_matrix,
    norm_x_sigma,
    project_high,
    project_low,
    random_state,
    to_coeffs,
)

__all__ = [
    "ExperimentResult",
    "Equilibrium",
    "nonlinearity_gain",
    "regularity_propagation",
    "nonlinear_obs_ratio",
    "shooting_equilibrium",
    "discrete_equilibrium",
    "stationary_multiplier",
    "end_to_end_reconstruction",
]

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


@dataclass
class ExperimentResult:
    """Outcome of one study.

    ``checks`` holds ``(scalar name, relation, threshold)`` triples; the
    verdict is true exactly when every check holds.
    """

    name: str
    scalars: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def check(self, key: str, relation: str, threshold: float) -> ExperimentResult:
        if relation not in _OPS:
            raise ValueError(f"unknown relation {relation!r}")
        self.checks.append((key, relation, float(threshold)))
        return self

    @property
    def verdict(self) -> bool:
        return all(_OPS[rel](self.scalars[key], thr) for key, rel, thr in self.checks)

    def failed_checks(self) -> list:
        return [c for c in self.checks if not _OPS[c[1]](self.scalars[c[0]], c[2])]


def _random_batch(grid, sigma, radius, rng, count, **kw) -> np.ndarray:
    return np.stack([random_state(grid, sigma, radius, rng, **kw).as_array() for _ in range(count)])


def _F_states(arr, system) -> np.ndarray:
    out = np.zeros_like(arr)
    out[..., 1, :] = apply_F_array(arr, system)
    return out


def nonlinearity_gain(system: WaveSystem, sigma: float, epsilon: float, R0: float, samples: int = 100,
                      seed: int = 0, max_mode: int | None = None) -> ExperimentResult:
    """Empirical constants of ``F : B(4 R0) in X^sigma -> X^(sigma+eps)``.

    Reports the largest ``||F(U)||_{X^(sigma+eps)}`` and the largest Lipschitz
    quotient over ``samples`` random pairs.  ``max_mode`` restricts the data
    to low modes so refinement studies in N see identical inputs.
    """
    if samples < 10:
        raise ValueError("samples must be at least 10")
    grid = system.grid
    rng = np.random.default_rng(seed)
    U = _random_batch(grid, sigma, 4.0 * R0, rng, samples, max_mode=max_mode)
    V = _random_batch(grid, sigma, 4.0 * R0, rng, samples, max_mode=max_mode)
    FU, FV = _F_states(U, system), _F_states(V, system)
    norms = norm_x_sigma(FU, grid, sigma + epsilon)
    den = norm_x_sigma(U - V, grid, sigma)
    quot = np.where(den > 0, norm_x_sigma(FU - FV, grid, sigma + epsilon) / np.where(den > 0, den, 1.0), 0.0)
    res = ExperimentResult("gain-check")
    res.scalars.update(
        max_norm=float(norms.max()),
        max_lipschitz=float(quot.max()),
        sigma=sigma,
        epsilon=epsilon,
        R0=R0,
        samples=samples,
        seed=seed,
        N=grid.N,
    )
    res.series.update(norm=norms, lipschitz=quot)
    return res.check("max_lipschitz", "<", math.inf).check("max_norm", "<", math.inf)


def regularity_propagation(U0: State, system: WaveSystem, time_grid: TimeGrid, sigma: float, epsilon: float,
                           bump: BumpFunction) -> ExperimentResult:
    """Bound the X^(sigma+eps) size of a solution by observed data and source terms.

    The trajectory is produced by the trapezoid-consistent scheme, so
    ``U = exp(tA) U0 + I(F(U))`` holds on the grid.  With ``c`` the
    observability constant at ``sigma + eps``, discrete triangle inequalities
    give ``sup_t ||U|| <= c (||C U||_{L2} + ||C I(F U)||_{L2}) + sup_t ||I(F U)||``.
    """
    grid = system.grid
    s = sigma + epsilon
    U = integrate_array(U0.as_array(), system, time_grid, scheme="duhamel-trapezoid")
    norms = norm_x_sigma(U, grid, s)
    duh = duhamel_all(_F_states(U, system), time_grid, grid)
    gram = assemble_gramian(grid, bump, time_grid, s)
    c_obs = gram.c_obs
    obs = signal_norm(observe_array(U, bump), grid, s, time_grid)
    obs_src = signal_norm(observe_array(duh, bump), grid, s, time_grid)
    rhs = c_obs * (obs + obs_src) + sup_norm(duh, grid, s)
    init = float(norms[0])
    res = ExperimentResult("regularity")
    res.scalars.update(
        sup_norm=float(norms.max()),
        min_norm=float(norms.min()),
        initial_norm=init,
        growth_ratio=float(norms.max() / init) if init > 0 else 0.0,
        estimate=rhs,
        estimate_ratio=float(norms.max() / rhs) if rhs > 0 else 0.0,
        c_obs=c_obs,
    )
    res.series.update(t=time_grid.times, norm=norms)
    return res.check("estimate_ratio", "<=", 1.0 + 1e-12)


def nonlinear_obs_ratio(system: WaveSystem, bump: BumpFunction, time_grid: TimeGrid, R0: float,
                        samples: int = 200, seed: int = 0, scheme: str = "strang",
                        batch: int = 50) -> ExperimentResult:
    """Observed velocity energy over initial energy for random data.

    ``ratio = int_0^T ||b u_t||_L2^2 dt / ||(u0, u1)||_{X^0}^2``; the verdict
    asks for ``min ratio > 1e-3``.
    """
    grid = system.grid
    if not system.f.is_defocusing():
        warnings.warn("nonlinearity is not defocusing; the observability floor is not expected", stacklevel=2)
    if bump.window is not None and time_grid.T <= gcc_time(bump.window, grid.L):
        warnings.warn("observation time does not exceed the geometric control time", stacklevel=2)
    rng = np.random.default_rng(seed)
    U0 = _random_batch(grid, 0.0, R0, rng, samples)
    B2 = bump.matrix_squared

    def observed_energy(start):
        traj = integrate_array(U0[start:start + batch], system, time_grid, scheme)
        v = traj[:, :, 1, :]
        return time_grid.weights @ np.einsum("mbj,jk,mbk->mb", v, B2, v)

    starts = range(0, samples, batch)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        observed = np.concatenate(list(pool.map(observed_energy, starts)))
    initial = norm_x_sigma(U0, grid, 0.0) ** 2
    ratios = observed / initial
    res = ExperimentResult("obs-ratio")
    res.scalars.update(
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
        mean_ratio=float(ratios.mean()),
        samples=samples,
        seed=seed,
        T=time_grid.T,
    )
    res.series.update(ratio=ratios, initial_energy=initial)
    return res.check("min_ratio", ">", 1e-3)


@dataclass(frozen=True)
class Equilibrium:
    """Stationary profile of ``u'' = f(u)`` with ``u(0) = u(L) = 0``."""

    slope: float
    L: float
    boundary_residual: float
    solution: object = field(repr=False)

    def __call__(self, x) -> np.ndarray:
        return self.solution(np.asarray(x, dtype=float))[0]


def _shoot(f: Polynomial, L: float, s: float, rtol: float = 1e-13):
    sol = scipy.integrate.solve_ivp(
        lambda x, y: (y[1], f(y[0])), (0.0, L), (0.0, s), method="DOP853", rtol=rtol, atol=rtol * 0.1,
        dense_output=True,
    )
    return float(sol.y[0, -1]), sol.sol


def shooting_equilibrium(f: Polynomial, L: float = math.pi, bracket: tuple | None = None, tol: float = 1e-10,
                         s_max: float = 2.0, scan: int = 400) -> Equilibrium:
    """Nontrivial Dirichlet equilibrium by bisection on ``u'(0)``.

    Without a bracket, slopes in (0, s_max] are scanned for the first sign
    change of ``u(L)``.  A defocusing f (``s f(s) >= 0``) is rejected at once:
    testing ``u'' = f(u)`` against u gives ``-int u'^2 = int u f(u) >= 0``.
    """
    if f.is_defocusing():
        raise ValueError("defocusing nonlinearity: the only Dirichlet equilibrium is u = 0")
    if bracket is None:
        slopes = np.linspace(s_max / scan, s_max, scan)
        prev_s, prev_v = None, None
        for s in slopes:
            v, _ = _shoot(f, L, s, rtol=1e-8)
            if not np.isfinite(v):
                break
            if prev_v is not None and np.sign(v) != np.sign(prev_v):
                bracket = (prev_s, s)
                break
            prev_s, prev_v = s, v
        if bracket is None:
            raise ValueError("no sign change of u(L) found; the nonlinearity may admit only u = 0")
    lo, hi = bracket
    v_lo, _ = _shoot(f, L, lo)
    v_hi, _ = _shoot(f, L, hi)
    if np.sign(v_lo) == np.sign(v_hi):
        raise ValueError("bracket does not enclose a sign change of u(L)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v_mid, sol = _shoot(f, L, mid)
        if abs(v_mid) < tol:
            return Equilibrium(mid, L, abs(v_mid), sol)
        if np.sign(v_mid) == np.sign(v_lo):
            lo, v_lo = mid, v_mid
        else:
            hi = mid
    raise RuntimeError(f"bisection stalled with |u(L)| = {abs(v_mid):.3e}")


def stationary_multiplier(grid: SpectralGrid, dt: float | None = None) -> np.ndarray:
    """Per-mode ``mu`` such that (u, 0) is a fixed state of the stepper iff ``F_v(u) = mu u``.

    ``dt=None`` gives the continuous value ``omega^2``; otherwise the
    trapezoid-consistent scheme gives ``omega^2 tan(omega dt / 2) / (omega dt / 2)``.
    """
    om2 = grid.weights
    if dt is None:
        return om2
    h = 0.5 * grid.frequencies * dt
    return om2 * np.tan(h) / h


def discrete_equilibrium(system: WaveSystem, guess, dt: float | None = None, tol: float = 1e-14) -> State:
    """Polish a guess onto the Galerkin (and optionally time-discrete) equilibrium equations."""
    mu = stationary_multiplier(system.grid, dt)
    guess = np.asarray(guess, dtype=float)
    N = system.grid.N

    def resid(c):
        arr = np.zeros((2, N))
        arr[0] = c
        return mu * c - apply_F_array(arr, system)

    sol = scipy.optimize.root(resid, guess, method="hybr", tol=tol)
    r = np.abs(resid(sol.x)).max()
    if not sol.success and r > 1e-10:
        raise RuntimeError(f"equilibrium polish failed: {sol.message} (residual {r:.3e})")
    return State(sol.x, np.zeros(N))


def _commutator_source(u, chi_matrix, grid) -> np.ndarray:
    """Coefficients of ``[Delta, chi] u = Delta(chi u) - chi Delta u`` in the Galerkin model."""
    lam = grid.eigenvalues
    return -lam * (chi_matrix @ u) + chi_matrix @ (lam * u)


def end_to_end_reconstruction(grid: SpectralGrid, f: Polynomial, time_grid: TimeGrid, n: int, sigma: float,
                              chi_window: ObservationWindow, obs_window: ObservationWindow, R0: float,
                              equilibrium: str = "nontrivial", fp_tol: float = 1e-12, max_iter: int = 200,
                              epsilon: float = 1.0) -> ExperimentResult:
    """Recover the high modes of a windowed stationary solution from its low modes.

    The stationary solution u is found by shooting and polished onto the
    discrete equations.  With a spatial cutoff chi, the variable
    ``z = (1 - chi) u`` solves the wave equation with weight ``1 - chi`` on
    the nonlinearity, ``H1 = (chi u, 0)`` and a source ``H2`` whose
    continuous form is ``(0, [Delta, chi] u - beta chi u)``.  The source used
    is the one that makes (z, 0) an exact fixed state of the stepper; its
    distance to the continuous formula is reported.
    """
    dt = time_grid.dt
    plain = WaveSystem(grid, f)
    if equilibrium == "zero":
        u = np.zeros(grid.N)
        slope = 0.0
    elif equilibrium == "nontrivial":
        eq = shooting_equilibrium(f, grid.L)
        slope = eq.slope
        guess = to_coeffs(eq(grid.nodes), grid)
        u = discrete_equilibrium(plain, guess, dt).u
    else:
        raise ValueError(f"unknown equilibrium kind {equilibrium!r}")
    chi = chi_window.profile(grid.nodes)
    chi_matrix = multiplication_matrix(chi, grid)
    windowed = WaveSystem(grid, f, chi_tilde=1.0 - chi)
    z = u - chi_matrix @ u
    Z = np.stack([z, np.zeros(grid.N)])
    H1 = np.stack([chi_matrix @ u, np.zeros(grid.N)])
    mu = stationary_multiplier(grid, dt)
    h2 = mu * z - apply_F_array(Z + H1, windowed)
    H2 = np.stack([np.zeros(grid.N), h2])
    formula = _commutator_source(u, chi_matrix, grid) - grid.beta * (chi_matrix @ u)
    scale = max(float(np.linalg.norm(formula)), 1e-300)
    source_gap = float(np.linalg.norm(h2 - formula)) / scale if np.any(u) else 0.0

    truth = np.broadcast_to(Z, (time_grid.M + 1, 2, grid.N))
    bump = make_bump(obs_window, grid)
    gram = assemble_gramian(grid, bump, time_grid, sigma, n)
    config = ReconstructionConfig(n=n, sigma=sigma, R0=R0, fp_tol=fp_tol, max_iter=max_iter, epsilon=epsilon)
    V = project_low(truth, n)
    res = ExperimentResult("end-to-end")
    res.scalars.update(n=n, N=grid.N, T=time_grid.T, M=time_grid.M, slope=slope, source_gap=source_gap,
                       c_obs=gram.c_obs, K_linear=linear_estimate_constant(gram),
                       observation_norm=signal_norm(observe_array(truth, bump), grid, sigma, time_grid))
    try:
        W, report = reconstruct_high(V, H1, H2, config, gram, windowed, return_report=True)
    except (FixedPointError, BallViolationError) as exc:
        report = getattr(exc, "report", None)
        res.scalars.update(error=math.inf, converged=0.0)
        if report is not None:
            res.scalars.update(iterations=report.iterations, contraction=report.contraction_estimate,
                               threshold_bound=report.threshold_bound)
            res.series.update(residual=np.asarray(report.residuals))
        return res.check("error", "<", 1e-6)
    recon = V + W.states
    denom = sup_norm(truth, grid, sigma)
    err = sup_norm(recon - truth, grid, sigma) / denom if denom > 0 else sup_norm(recon, grid, sigma)
    res.scalars.update(error=err, iterations=report.iterations, converged=float(report.converged),
                       contraction=report.contraction_estimate, threshold_bound=report.threshold_bound,
                       high_norm=sup_norm(project_high(truth, n), grid, sigma))
    res.series.update(residual=np.asarray(report.residuals))
    return res.check("error", "<", 1e-6)
