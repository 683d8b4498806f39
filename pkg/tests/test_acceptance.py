"""The ten acceptance criteria at their stated tolerances and time limits.

Each test records a one-line PASS/FAIL verdict, printed in the terminal
summary (and immediately on stdout when run with ``-s``).
"""

import math
import subprocess
import sys
import time

import numpy as np

from conftest import ACCEPTANCE
from wave_observe.dynamics import Polynomial, TimeGrid, WaveSystem, duhamel_all, integrate_array, propagate_array
from wave_observe.experiments import nonlinear_obs_ratio
from wave_observe.observability import (
    ObservationSignal,
    ObservationWindow,
    assemble_gramian,
    constant_bump,
    gcc_time,
    make_bump,
    observe_array,
)
from wave_observe.plate import (
    CutoffProfile,
    eigen_ucp_check,
    interaction_envelope,
    plate_gramian,
    plate_weak_observability_constant,
    schrodinger_gramian,
    split,
    unsplit,
)
from wave_observe.reconstruction import (
    ReconstructionConfig,
    determining_threshold,
    linear_reconstruct,
    solve_fixed_point,
    sup_norm,
    uniqueness_check,
)
from wave_observe.spectral_core import SpectralGrid, norm_x_sigma, project_high, project_low, random_state

WINDOW = ObservationWindow(((0.5, 1.5),), 0.25)


class Verdict:
    """Collects named checks for one criterion and reports a single line."""

    def __init__(self, k):
        self.k = k
        self.items = []
        self.start = time.perf_counter()

    def check(self, label, ok, value):
        self.items.append((label, bool(ok), value))

    def finish(self, limit):
        elapsed = time.perf_counter() - self.start
        self.check("runtime_s", elapsed < limit, elapsed)
        ok = all(o for _, o, _ in self.items)
        detail = " ".join(f"{label}={value:.4g}" for label, _, value in self.items)
        failed = [label for label, o, _ in self.items if not o]
        if failed:
            detail += " failed: " + ",".join(failed)
        ACCEPTANCE[self.k] = (ok, detail)
        print(f"criterion {self.k}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail


def test_criterion_01_semigroup_exactness():
    v = Verdict(1)
    grid = SpectralGrid(32)
    worst = 0.0
    for T in (1.0, 2 * math.pi):
        for j in range(1, 33):
            W = np.zeros((2, 32))
            W[0, j - 1] = 1.0
            expected = np.zeros((2, 32))
            expected[0, j - 1] = math.cos(j * T)
            expected[1, j - 1] = -j * math.sin(j * T)
            worst = max(worst, norm_x_sigma(propagate_array(W, T, grid.frequencies) - expected, grid, 1.0))
    v.check("max_X1_error", worst < 1e-12, worst)
    v.finish(1.0)


def test_criterion_02_gramian_closed_form():
    v = Verdict(2)
    grid = SpectralGrid(32)
    G = assemble_gramian(grid, constant_bump(grid), TimeGrid(2 * math.pi, 4096), 0.0)
    diag = np.diag(G.matrix)
    off = np.abs(G.matrix - np.diag(diag)).max()
    v.check("diag_dev", np.abs(diag - math.pi).max() < 1e-8, np.abs(diag - math.pi).max())
    v.check("offdiag", off < 1e-8, off)
    v.finish(5.0)


def test_criterion_03_uniform_observability():
    v = Verdict(3)
    grid = SpectralGrid(64)
    bump = make_bump(WINDOW, grid)
    tg = TimeGrid(7.0, 2048)
    gcc = gcc_time(WINDOW)
    lams = [assemble_gramian(grid, bump, tg, 0.0, n).lambda_min for n in (4, 8, 16, 32)]
    v.check("T_over_gcc", tg.T > gcc, tg.T / gcc)
    v.check("min_lambda_min", min(lams) > 0, min(lams))
    v.check("spread", max(lams) / min(lams) <= 1.2, max(lams) / min(lams))
    v.finish(30.0)


def test_criterion_04_linear_round_trip():
    v = Verdict(4)
    grid = SpectralGrid(64)
    tg = TimeGrid(7.0, 2048)
    n, sigma = 8, 0.6
    rng = np.random.default_rng(2024)
    bump = make_bump(WINDOW, grid)
    gram = assemble_gramian(grid, bump, tg, sigma, n)
    W0 = project_high(random_state(grid, sigma, 1.0, rng, decay=1.0, fill=True), n)
    t = tg.times[:, None, None]
    parts = [random_state(grid, sigma, 1.0, rng, decay=1.0).as_array() for _ in range(3)]
    H = parts[0] + parts[1] * np.cos(t) + parts[2] * np.sin(2 * t)
    truth = propagate_array(W0.as_array(), tg.times, grid.frequencies) + duhamel_all(project_high(H, n), tg, grid)
    G = ObservationSignal(tg, observe_array(truth, bump))
    W = linear_reconstruct(G, H, ReconstructionConfig(n=n, sigma=sigma), gram)
    err = sup_norm(W.states - truth, grid, sigma) / sup_norm(truth, grid, sigma)
    v.check("relative_error", err < 1e-8, err)
    v.finish(10.0)


def cubic_problem(seed):
    grid = SpectralGrid(64)
    tg = TimeGrid(7.0, 2048)
    system = WaveSystem(grid, Polynomial((0, 0, 0, 1)))
    rng = np.random.default_rng(seed)
    U0 = random_state(grid, 0.6, 0.25, rng, decay=4.0, fill=True)
    U = integrate_array(U0.as_array(), system, tg, scheme="duhamel-trapezoid")
    bump = make_bump(WINDOW, grid)
    gram = assemble_gramian(grid, bump, tg, 0.6, 8)
    cfg = ReconstructionConfig(n=8, sigma=0.6, R0=0.5)
    high = project_high(U, 8)
    return system, gram, cfg, project_low(U, 8), ObservationSignal(tg, observe_array(high, bump)), high


def test_criterion_05_fixed_point_contraction():
    v = Verdict(5)
    system, gram, cfg, V, G, high = cubic_problem(11)
    W, rep = solve_fixed_point(V, None, None, G, cfg, gram, system, raise_on_failure=False)
    err = sup_norm(W.states - high, system.grid, 0.6) / sup_norm(high, system.grid, 0.6)
    v.check("converged", rep.converged, float(rep.converged))
    v.check("iterations", rep.iterations <= 50, rep.iterations)
    ratio = rep.contraction_estimate / rep.threshold_bound
    v.check("contraction_over_bound", ratio <= 1.2, ratio)
    v.check("relative_error", err < 1e-6, err)
    v.finish(60.0)


def test_criterion_06_determining_modes():
    v = Verdict(6)
    system, gram, cfg, V, G, high = cubic_problem(12)
    dist = uniqueness_check(V, None, None, G, cfg, gram, system, trials=5, seed=3)
    thr = determining_threshold(10.0, 1.0, 1.0, SpectralGrid(64))
    v.check("max_distance", dist < 1e-9, dist)
    v.check("threshold_n", thr.n == 3 and not thr.overflow, thr.n)
    v.finish(60.0)


def test_criterion_07_gcc_time():
    v = Verdict(7)
    value = gcc_time(WINDOW, math.pi)
    dev = abs(value - 2 * (math.pi - 1.5))
    v.check("deviation", dev < 1e-3, dev)
    v.finish(1.0)


def test_criterion_08_plate_transfer():
    v = Verdict(8)
    grid = SpectralGrid(32)
    rng = np.random.default_rng(8)
    z0, z1 = rng.standard_normal(32), rng.standard_normal(32)
    r0, r1 = unsplit(split(z0, z1, grid), grid)
    rt = max(np.abs(r0 - z0).max(), np.abs(r1 - z1).max())
    v.check("split_roundtrip", rt < 1e-13, rt)

    envelope_profile = CutoffProfile(4.0, 12.0, 16.0, 3.0)
    measured, bound = interaction_envelope(envelope_profile, SpectralGrid(16), 4, TimeGrid(16.0, 2**15))
    env = float((measured / bound).max())
    v.check("envelope_ratio", env <= 1 + 1e-12, env)

    bump = make_bump(WINDOW, grid)
    tg = TimeGrid(2.0, 2**13)
    schr = schrodinger_gramian(grid, bump, tg).lambda_min
    ucp = eigen_ucp_check(bump, grid)
    plate = plate_gramian(grid, bump, tg).lambda_min
    v.check("schrodinger_lambda_min", True, schr)
    v.check("ucp_min_mass", True, ucp)
    v.check("plate_lambda_min", plate > 0 or not (schr > 0 and ucp > 0), plate)

    ones = constant_bump(grid)
    inner = schrodinger_gramian(grid, ones, TimeGrid(envelope_profile.inner_length, 2**14)).lambda_min
    tr = plate_weak_observability_constant(grid, ones, envelope_profile, TimeGrid(16.0, 2**16), inner)
    v.check("transfer_bound", tr.lower_bound > 0, tr.lower_bound)
    v.check("direct_over_bound", 1.0 <= tr.ratio <= 4.0, tr.ratio)
    v.finish(60.0)


def test_criterion_09_nonlinear_observability_floor():
    v = Verdict(9)
    grid = SpectralGrid(32)
    cubic = nonlinear_obs_ratio(WaveSystem(grid), make_bump(WINDOW, grid), TimeGrid(7.0, 2048), 1.0, 200, 9)
    v.check("min_ratio", cubic.scalars["min_ratio"] > 1e-3, cubic.scalars["min_ratio"])
    linear = nonlinear_obs_ratio(WaveSystem(grid, Polynomial.zero()), constant_bump(grid),
                                 TimeGrid(2 * math.pi, 2048), 1.0, 200, 9)
    dev = float(np.abs(linear.series["ratio"] - math.pi).max())
    v.check("linear_dev_from_pi", dev < 1e-6, dev)
    v.finish(300.0)


def test_criterion_10_determinism(tmp_path):
    v = Verdict(10)
    outs, codes, times = [], [], []
    for name in ("first.csv", "second.csv"):
        path = tmp_path / name
        t0 = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "wave_observe", "suite", "--seed", "0", "--out", str(path)],
                              capture_output=True, text=True)
        times.append(time.perf_counter() - t0)
        codes.append(proc.returncode)
        outs.append(path.read_bytes())
    v.check("exit_codes_zero", codes == [0, 0], max(codes))
    v.check("byte_identical", outs[0] == outs[1], float(outs[0] == outs[1]))
    v.check("suite_seconds", max(times) < 600.0, max(times))
    v.finish(1200.0)
