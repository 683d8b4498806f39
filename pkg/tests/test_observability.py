import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wave_observe.dynamics import TimeGrid, propagate_array
from wave_observe.observability import (
    BumpFunction,
    NotObservableError,
    ObservationSignal,
    ObservationWindow,
    assemble_gramian,
    commutator_check,
    constant_bump,
    gcc_time,
    make_bump,
    observe,
    observe_array,
    pseudo_inverse_apply,
    resolve_subspace,
    signal_norm,
    smoothstep,
)
from wave_observe.spectral_core import SpectralGrid, State, norm_x_sigma, project_high, random_state

WINDOW = ObservationWindow(((0.5, 1.5),), 0.25)
seeds = st.integers(0, 2**32 - 1)


def test_smoothstep_endpoints_and_flatness():
    x = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert np.allclose(smoothstep(x), [0, 0, 0.5, 1, 1])
    h = 1e-4
    for deg in (5, 7):
        assert abs(smoothstep(h, deg)) < 1e-10 and abs(1 - smoothstep(1 - h, deg)) < 1e-10
    with pytest.raises(ValueError):
        smoothstep(0.5, 3)


def test_bump_plateau_and_support():
    x = np.linspace(0, math.pi, 2001)
    b = WINDOW.profile(x)
    assert np.all(b[(x >= 0.5) & (x <= 1.5)] == 1.0)
    assert np.all(b[(x <= 0.25) | (x >= 1.75)] == 0.0)
    assert np.all((b >= 0) & (b <= 1))


def test_window_validation():
    with pytest.raises(ValueError):
        ObservationWindow(((1.0, 0.5),))
    with pytest.raises(ValueError):
        ObservationWindow(((0.0, 1.0), (0.5, 2.0)))
    with pytest.raises(ValueError):
        ObservationWindow(())
    with pytest.raises(ValueError):
        make_bump(ObservationWindow(((1.0, 4.0),)), SpectralGrid(8))


def test_zero_velocity_gives_zero_output():
    grid = SpectralGrid(8)
    s = State(np.random.default_rng(0).standard_normal(8), np.zeros(8))
    assert not np.any(observe(s, make_bump(WINDOW, grid)).as_array())


def test_full_observation_returns_velocity():
    grid = SpectralGrid(8)
    s = State.from_array(np.random.default_rng(0).standard_normal((2, 8)))
    out = observe(s, constant_bump(grid))
    assert np.abs(out.v - s.v).max() < 1e-14 and not np.any(out.u)


def test_observed_first_mode_norm_matches_quadrature():
    grid = SpectralGrid(128)
    bump = make_bump(WINDOW, grid)
    s = State(np.zeros(128), np.eye(128)[0])
    out = observe(s, bump)
    # node quadrature of a C2 bump aliases at the 1e-8 level
    val, _ = quad(lambda x: (bump(x) * grid.basis_function(1, x)) ** 2, 0, math.pi, points=[0.25, 0.5, 1.5, 1.75])
    assert np.sum(out.v**2) == pytest.approx(val, rel=1e-7)
    assert bump.matrix_squared[0, 0] == pytest.approx(val, rel=1e-7)


def test_signal_requires_zero_position():
    tg = TimeGrid(1.0, 4)
    with pytest.raises(ValueError):
        ObservationSignal(tg, np.ones((5, 2, 3)))
    sig = ObservationSignal.from_velocity(tg, np.ones((5, 3)))
    assert np.array_equal((2 * sig - sig).values, sig.values)


def test_signal_norm_constant_signal():
    grid, tg = SpectralGrid(3), TimeGrid(2.0, 10)
    sig = ObservationSignal.from_velocity(tg, np.tile([1.0, 0.0, 0.0], (11, 1)))
    assert signal_norm(sig, grid, 0.0) == pytest.approx(math.sqrt(2.0))


def test_full_observation_gramian_is_pi_identity():
    grid = SpectralGrid(32)
    G = assemble_gramian(grid, constant_bump(grid), TimeGrid(2 * math.pi, 4096), 0.0)
    assert np.abs(G.matrix - math.pi * np.eye(64)).max() < 1e-8
    assert G.observable and G.c_obs == pytest.approx(math.pi**-0.5)


def test_short_time_gramian_degenerates():
    grid = SpectralGrid(8)
    G = assemble_gramian(grid, make_bump(WINDOW, grid), TimeGrid(1e-8, 2), 0.0)
    assert G.lambda_min < 1e-12 * max(G.lambda_max, 1.0)
    assert not G.observable and G.c_obs == math.inf


def test_interior_gramian_positive_and_stable_in_N():
    tg = TimeGrid(7.0, 2048)
    lams = []
    for N in (16, 32, 64):
        grid = SpectralGrid(N)
        lams.append(assemble_gramian(grid, make_bump(WINDOW, grid), tg, 0.0).lambda_min)
    assert min(lams) > 0
    assert abs(lams[2] - lams[1]) / lams[2] < 0.05


@settings(max_examples=20, deadline=None)
@given(sigma=st.floats(0, 1), n=st.integers(0, 12), T=st.floats(0.5, 8))
def test_gramian_symmetric_psd(sigma, n, T):
    grid = SpectralGrid(16)
    G = assemble_gramian(grid, make_bump(WINDOW, grid), TimeGrid(T, 512), sigma, n)
    assert np.array_equal(G.matrix, G.matrix.T)
    assert G.lambda_min > -1e-10 * G.lambda_max


def test_gramian_lambda_min_nondecreasing_in_T():
    grid = SpectralGrid(16)
    bump = make_bump(WINDOW, grid)
    dt = 1 / 256
    lams = [assemble_gramian(grid, bump, TimeGrid(T, int(T / dt)), 0.0).lambda_min for T in (2.0, 4.0, 6.0, 8.0)]
    assert all(b >= a * (1 - 1e-6) for a, b in zip(lams, lams[1:]))


def test_uniform_in_n():
    grid = SpectralGrid(64)
    bump = make_bump(WINDOW, grid)
    tg = TimeGrid(7.0, 2048)
    lams = [assemble_gramian(grid, bump, tg, 0.0, n).lambda_min for n in (4, 8, 16, 32)]
    assert min(lams) > 0 and max(lams) / min(lams) <= 1.2


@pytest.mark.parametrize("sigma", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_observability_at_every_regularity(sigma):
    grid = SpectralGrid(32)
    G = assemble_gramian(grid, make_bump(WINDOW, grid), TimeGrid(7.0, 2048), sigma)
    assert G.observable and math.isfinite(G.c_obs)


def test_resolve_subspace():
    assert resolve_subspace(None, 8) == (1, 8)
    assert resolve_subspace("full", 8) == (1, 8)
    assert resolve_subspace(3, 8) == (4, 8)
    assert resolve_subspace((2, 5), 8) == (2, 5)
    with pytest.raises(ValueError):
        resolve_subspace(8, 8)


def _setup(n=4, sigma=0.5, N=32):
    grid = SpectralGrid(N)
    tg = TimeGrid(7.0, 1024)
    bump = make_bump(WINDOW, grid)
    return grid, tg, bump, assemble_gramian(grid, bump, tg, sigma, n)


def test_pseudo_inverse_of_zero_signal():
    grid, tg, bump, G = _setup()
    sig = ObservationSignal(tg, np.zeros((tg.M + 1, 2, grid.N)))
    assert not np.any(pseudo_inverse_apply(G, sig, grid, tg, 0.5).as_array())


@settings(max_examples=15, deadline=None)
@given(seed=seeds, n=st.sampled_from([0, 4, 8, 16]), sigma=st.sampled_from([0.0, 0.6, 1.0]))
def test_pseudo_inverse_inverts_observation(seed, n, sigma):
    grid, tg, bump, G = _setup(n, sigma)
    W = project_high(random_state(grid, sigma, 1.0, np.random.default_rng(seed), fill=True), n)
    sig = ObservationSignal(tg, observe_array(propagate_array(W.as_array(), tg.times, grid.frequencies), bump))
    rec = pseudo_inverse_apply(G, sig, grid, tg, sigma)
    assert norm_x_sigma(rec - W, grid, sigma) < 1e-8


def test_pseudo_inverse_ignores_orthogonal_complement():
    grid, tg, bump, G = _setup(4, 0.5)
    rng = np.random.default_rng(11)
    W = project_high(random_state(grid, 0.5, 1.0, rng, fill=True), 4)
    clean = observe_array(propagate_array(W.as_array(), tg.times, grid.frequencies), bump)
    # remove from a random perturbation its component in the range of the observation map
    noise = np.zeros_like(clean)
    noise[:, 1] = rng.standard_normal((tg.M + 1, grid.N))
    coeff = pseudo_inverse_apply(G, ObservationSignal(tg, noise), grid, tg, 0.5)
    in_range = observe_array(propagate_array(coeff.as_array(), tg.times, grid.frequencies), bump)
    perp = noise - in_range
    rec = pseudo_inverse_apply(G, ObservationSignal(tg, clean + perp), grid, tg, 0.5)
    assert norm_x_sigma(rec - W, grid, 0.5) < 1e-8


def test_pseudo_inverse_rejects_mismatches_and_singular():
    grid, tg, bump, G = _setup()
    sig = ObservationSignal(tg, np.zeros((tg.M + 1, 2, grid.N)))
    with pytest.raises(ValueError):
        pseudo_inverse_apply(G, sig, grid, tg, 0.25)
    with pytest.raises(ValueError):
        pseudo_inverse_apply(G, sig, grid, TimeGrid(7.0, 512), 0.5)
    tiny = TimeGrid(1e-8, 2)
    Gs = assemble_gramian(grid, bump, tiny, 0.0)
    with pytest.raises(NotObservableError):
        pseudo_inverse_apply(Gs, ObservationSignal(tiny, np.zeros((3, 2, grid.N))), grid, tiny, 0.0)


def test_gcc_time_examples():
    assert gcc_time(ObservationWindow(((0.0, math.pi),))) == 0.0
    assert abs(gcc_time(WINDOW) - 2 * (math.pi - 1.5)) < 1e-3


@settings(max_examples=20, deadline=None)
@given(b=st.floats(1.7, 3.0), width=st.floats(0.1, 1.0))
def test_gcc_time_symmetric_window(b, width):
    a = math.pi - b
    if a >= b:
        return
    assert abs(gcc_time(ObservationWindow(((a, b),))) - 2 * a) < 1e-3


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.05, 2.0), w=st.floats(0.1, 1.0))
def test_gcc_time_single_interval_closed_form(a, w):
    b = min(a + w, math.pi - 0.05)
    assert abs(gcc_time(ObservationWindow(((a, b),))) - 2 * max(a, math.pi - b)) < 1e-3


def test_commutator_with_constant_vanishes():
    grid = SpectralGrid(16)
    assert commutator_check(constant_bump(grid), grid, 0.0, 1.0) < 1e-10


def test_commutator_stabilizes_and_is_monotone_in_epsilon():
    vals = []
    for N in (128, 256):
        grid = SpectralGrid(N)
        vals.append(commutator_check(make_bump(WINDOW, grid), grid, 0.0, 1.0))
    assert abs(vals[1] - vals[0]) / vals[1] < 0.05
    grid = SpectralGrid(64)
    bump = make_bump(WINDOW, grid)
    assert commutator_check(bump, grid, 0.0, 0.5) <= commutator_check(bump, grid, 0.0, 1.0)
    with pytest.raises(ValueError):
        commutator_check(bump, grid, 0.5, 1.0)


def test_bump_validation_and_offgrid_eval():
    grid = SpectralGrid(4)
    with pytest.raises(ValueError):
        BumpFunction(grid, np.full(grid.quad_points, 2.0))
    assert np.all(constant_bump(grid)(np.array([0.1, 2.0])) == 1.0)
    with pytest.raises(ValueError):
        BumpFunction(grid, np.linspace(0, 1, grid.quad_points))(0.3)
