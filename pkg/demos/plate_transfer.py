"""Plate observability from Schrodinger observability.

Compares the transfer lower bound with the direct plate Gramian for a few
time cutoffs.  Run: python demos/plate_transfer.py
"""

from wave_observe.dynamics import TimeGrid
from wave_observe.observability import ObservationWindow, constant_bump, make_bump
from wave_observe.plate import (
    CutoffProfile,
    eigen_ucp_check,
    plate_weak_observability_constant,
    schrodinger_gramian,
)
from wave_observe.spectral_core import SpectralGrid


def report(label, grid, bump, profile, M):
    inner = schrodinger_gramian(grid, bump, TimeGrid(profile.inner_length, 2**16)).lambda_min
    tr = plate_weak_observability_constant(grid, bump, profile, TimeGrid(profile.T, M), inner)
    print(f"{label:28s} c={tr.c:.4f} interaction={tr.interaction:.4f} "
          f"bound={tr.lower_bound:+.4f} direct={tr.direct_lambda_min:.4f}")


def main():
    grid = SpectralGrid(32)
    ones = constant_bump(grid)
    report("b=1, rho=(4,12,16)", grid, ones, CutoffProfile(4, 12, 16), 2**16)
    report("b=1, rho=(1,15,16)", grid, ones, CutoffProfile(1, 15, 16), 2**16)
    bump = make_bump(ObservationWindow(((0.5, 1.5),)), grid)
    print(f"min_j ||b e_j|| = {eigen_ucp_check(bump, grid):.4f}")
    report("window, rho=(0.1,1.9,2)", grid, bump, CutoffProfile(0.1, 1.9, 2.0), 2**13)
    report("window, rho=(0.5,1.5,2)", grid, bump, CutoffProfile(0.5, 1.5, 2.0), 2**13)


if __name__ == "__main__":
    main()
