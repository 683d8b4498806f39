"""Configuration-driven runner: ``wave-observe <subcommand> --config FILE``.

Configuration is plain ``key=value`` text, one pair per line, ``#`` starts a
comment.  Unknown keys are rejected and every subcommand names the keys it
requires.  Results go out as CSV (header row, 17 significant digits).

Exit codes: 0 pass, 2 fail, 1 usage or configuration error, 3 numerical
failure (divergence, singular Gramian, nonfinite integration).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import re
import sys
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegrationError, Polynomial, TimeGrid, WaveSystem, duhamel_all, energy, integrate_array
from .dynamics import propagate_array
from .experiments import ExperimentResult, end_to_end_reconstruction, nonlinear_obs_ratio, nonlinearity_gain
from .observability import (
    NotObservableError,
    ObservationSignal,
    ObservationWindow,
    assemble_gramian,
    constant_bump,
    gcc_time,
    make_bump,
    observe_array,
)
from .plate import (
    CutoffProfile,
    UnderResolvedError,
    eigen_ucp_check,
    plate_weak_observability_constant,
    schrodinger_gramian,
)
from .reconstruction import (
    BallViolationError,
    FixedPointError,
    ReconstructionConfig,
    determining_threshold,
    empirical_lipschitz,
    linear_reconstruct,
    solve_fixed_point,
    sup_norm,
    threshold_bound,
)
from .spectral_core import SpectralGrid, norm_x_sigma, project_high, random_state
from .suite import fixed_point_problem, random_source, run_suite

EXIT_PASS, EXIT_USAGE, EXIT_FAIL, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


_PI = re.compile(r"^\s*([-+]?[0-9.eE+-]*)\s*\*?\s*pi\s*$")


def _real(text: str) -> float:
    m = _PI.match(text)
    if m:
        head = m.group(1)
        return (float(head) if head not in ("", "+", "-") else float(head + "1")) * math.pi
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    return value


def _int(text: str) -> int:
    value = int(text)
    return value


def _intervals(text: str):
    if text.strip().lower() == "full":
        return "full"
    out = []
    for part in text.split(","):
        a, b = part.split(":")
        out.append((_real(a), _real(b)))
    return tuple(out)


def _coeffs(text: str):
    return tuple(_real(c) for c in text.split(","))


def _positive(v):
    return v > 0


@dataclass(frozen=True)
class _Key:
    parse: object
    default: object
    valid: object = None
    rule: str = ""


KEYS = {
    "L": _Key(_real, math.pi, _positive, "must be positive"),
    "N": _Key(_int, 64, lambda v: 1 <= v <= 512, "must lie in 1..512"),
    "M": _Key(_int, 2048, lambda v: v >= 2, "must be at least 2"),
    "T": _Key(_real, 7.0, _positive, "must be positive"),
    "beta": _Key(_real, 0.0, lambda v: v >= 0, "must be nonnegative"),
    "sigma": _Key(_real, 0.0, lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    "epsilon": _Key(_real, 1.0, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "omega": _Key(_intervals, ((0.5, 1.5),)),
    "plateau_margin": _Key(_real, 0.25, _positive, "must be positive"),
    "n": _Key(_int, None, lambda v: v >= 0, "must be nonnegative"),
    "R0": _Key(_real, 0.5, _positive, "must be positive"),
    "eta": _Key(_real, None, _positive, "must be positive"),
    "fp_tol": _Key(_real, 1e-10, _positive, "must be positive"),
    "max_iter": _Key(_int, 200, lambda v: v >= 1, "must be positive"),
    "f": _Key(_coeffs, (0.0, 0.0, 0.0, 1.0)),
    "seed": _Key(_int, 0, lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer"),
    "output": _Key(str, None),
    "samples": _Key(_int, 200, lambda v: v >= 1, "must be positive"),
    "scheme": _Key(str, "strang", lambda v: v in ("strang", "duhamel-trapezoid"),
                   "must be strang or duhamel-trapezoid"),
    "amplitude": _Key(_real, 0.25, _positive, "must be positive"),
    "lipschitz_C": _Key(_real, None, _positive, "must be positive"),
    "chi_omega": _Key(_intervals, ((0.4, 2.7),)),
    "chi_margin": _Key(_real, 0.2, _positive, "must be positive"),
    "obs_margin": _Key(_real, 0.1, _positive, "must be positive"),
    "t_inner_start": _Key(_real, None, _positive, "must be positive"),
    "t_inner_end": _Key(_real, None, _positive, "must be positive"),
    "profile_sharpness": _Key(_real, 3.0, _positive, "must be positive"),
    "equilibrium": _Key(str, "nontrivial", lambda v: v in ("zero", "nontrivial"), "must be zero or nontrivial"),
}

REQUIRED = {
    "simulate": ("N", "T", "M"),
    "gramian": ("N", "T", "M", "sigma", "omega"),
    "gcc-time": ("omega",),
    "reconstruct-linear": ("N", "T", "M", "sigma", "n", "omega"),
    "reconstruct-fixed-point": ("N", "T", "M", "sigma", "n", "omega", "f", "R0"),
    "determining-modes": ("N", "T", "epsilon"),
    "plate-transfer": ("N", "T", "omega"),
    "obs-ratio": ("N", "T", "M", "omega", "R0"),
    "gain-check": ("N", "sigma", "epsilon", "R0"),
    "end-to-end": ("N", "T", "M", "n", "sigma", "omega", "chi_omega", "f", "R0"),
    "suite": (),
}


def parse_config(text: str, required=()) -> dict:
    """Parse ``key=value`` lines; returns every known key with defaults filled in."""
    given = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in given:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        spec = KEYS[key]
        try:
            parsed = spec.parse(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: cannot parse {key}={value!r} ({exc})") from None
        if spec.valid is not None and not spec.valid(parsed):
            raise ConfigError(f"line {lineno}: {key}={value!r} {spec.rule}")
        given[key] = parsed
    missing = [k for k in required if k not in given]
    if missing:
        raise ConfigError(f"missing required config key: {', '.join(missing)}")
    cfg = {k: spec.default for k, spec in KEYS.items()}
    cfg.update(given)
    return cfg


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(stream, header, rows):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def _grid(cfg) -> SpectralGrid:
    return SpectralGrid(cfg["N"], L=cfg["L"], beta=cfg["beta"])


def _time_grid(cfg) -> TimeGrid:
    return TimeGrid(cfg["T"], cfg["M"])


def _window(cfg, key="omega", margin_key="plateau_margin"):
    ivs = cfg[key]
    if ivs == "full":
        return None
    return ObservationWindow(ivs, cfg[margin_key])


def _bump(cfg, grid):
    window = _window(cfg)
    return constant_bump(grid) if window is None else make_bump(window, grid)


def _system(cfg, grid) -> WaveSystem:
    return WaveSystem(grid, Polynomial(cfg["f"]))


@dataclass
class Outcome:
    header: list
    rows: list
    passed: bool
    summary: str


def _from_result(res: ExperimentResult, series_keys=None) -> Outcome:
    if series_keys:
        length = len(res.series[series_keys[0]])
        rows = [[i] + [res.series[k][i] for k in series_keys] for i in range(length)]
        header = ["index"] + list(series_keys)
    else:
        rows = [[k, v] for k, v in res.scalars.items()]
        header = ["quantity", "value"]
    summary = " ".join(f"{k}={_fmt(v)}" for k, v in res.scalars.items())
    return Outcome(header, rows, res.verdict, f"{res.name}: {'PASS' if res.verdict else 'FAIL'} {summary}")


def cmd_simulate(cfg) -> Outcome:
    grid, tg = _grid(cfg), _time_grid(cfg)
    system = _system(cfg, grid)
    rng = np.random.default_rng(cfg["seed"])
    U0 = random_state(grid, cfg["sigma"], cfg["R0"], rng)
    U = integrate_array(U0.as_array(), system, tg, cfg["scheme"])
    E = energy(U, system)
    norms = norm_x_sigma(U, grid, cfg["sigma"])
    drift = float(np.abs(E - E[0]).max() / max(abs(E[0]), 1e-300))
    rows = [[t, nrm, e] for t, nrm, e in zip(tg.times, norms, E)]
    return Outcome(["t", "norm_x_sigma", "energy"], rows, True,
                   f"simulate: PASS steps={tg.M} relative_energy_drift={_fmt(drift)}")


def cmd_gramian(cfg) -> Outcome:
    grid, tg = _grid(cfg), _time_grid(cfg)
    G = assemble_gramian(grid, _bump(cfg, grid), tg, cfg["sigma"], cfg["n"] or None)
    modes = G.modes
    k = modes.size
    diag = np.diag(G.matrix)
    rows = []
    for a in range(2 * k):
        rows.append([a, modes[a % k], "position" if a < k else "velocity", diag[a], G.eigenvalues[a]])
    summary = (f"gramian: {'PASS' if G.observable else 'FAIL'} modes={G.subspace[0]}..{G.subspace[1]} "
               f"lambda_min={_fmt(G.lambda_min)} lambda_max={_fmt(G.lambda_max)} c_obs={_fmt(G.c_obs)}")
    return Outcome(["index", "mode", "component", "diagonal", "eigenvalue"], rows, G.observable, summary)


def cmd_gcc(cfg) -> Outcome:
    window = _window(cfg)
    if window is None:
        window = ObservationWindow(((0.0, cfg["L"]),), cfg["plateau_margin"])
    value = gcc_time(window, cfg["L"])
    rows = [["gcc_time", value]]
    if len(window.intervals) == 1:
        a, b = window.intervals[0]
        rows.append(["closed_form", 2.0 * max(a, cfg["L"] - b)])
    return Outcome(["quantity", "value"], rows, True, f"gcc-time: PASS gcc_time={_fmt(value)}")


def cmd_reconstruct_linear(cfg) -> Outcome:
    grid, tg = _grid(cfg), _time_grid(cfg)
    n, sigma = cfg["n"], cfg["sigma"]
    bump = _bump(cfg, grid)
    gram = assemble_gramian(grid, bump, tg, sigma, n)
    rng = np.random.default_rng(cfg["seed"])
    W0 = project_high(random_state(grid, sigma, 1.0, rng, decay=1.0, fill=True), n)
    H = random_source(grid, tg, sigma, rng)
    truth = propagate_array(W0.as_array(), tg.times, grid.frequencies) + duhamel_all(project_high(H, n), tg, grid)
    G = ObservationSignal(tg, observe_array(truth, bump))
    W = linear_reconstruct(G, H, ReconstructionConfig(n=n, sigma=sigma), gram)
    err_t = norm_x_sigma(W.states - truth, grid, sigma) / sup_norm(truth, grid, sigma)
    err = float(err_t.max())
    passed = err < 1e-8
    rows = [[t, e] for t, e in zip(tg.times, err_t)]
    return Outcome(["t", "relative_error"], rows, passed,
                   f"reconstruct-linear: {'PASS' if passed else 'FAIL'} sup_relative_error={_fmt(err)}")


def cmd_reconstruct_fixed_point(cfg) -> Outcome:
    system, gram, base, V, G, high = fixed_point_problem(
        cfg["seed"], N=cfg["N"], M=cfg["M"], T=cfg["T"], sigma=cfg["sigma"], n=cfg["n"],
        amplitude=cfg["amplitude"], R0=cfg["R0"], f=Polynomial(cfg["f"]),
    )
    config = ReconstructionConfig(n=cfg["n"], sigma=cfg["sigma"], R0=cfg["R0"], eta=cfg["eta"],
                                  fp_tol=cfg["fp_tol"], max_iter=cfg["max_iter"], epsilon=cfg["epsilon"])
    W, rep = solve_fixed_point(V, None, None, G, config, gram, system, raise_on_failure=False)
    grid = system.grid
    err = sup_norm(W.states - high, grid, config.sigma) / max(sup_norm(high, grid, config.sigma), 1e-300)
    rows = [[k, r] for k, r in enumerate(rep.residuals)]
    passed = rep.converged and err < 1e-6
    summary = (f"reconstruct-fixed-point: {'PASS' if passed else 'FAIL'} converged={int(rep.converged)} "
               f"iterations={rep.iterations} contraction={_fmt(rep.contraction_estimate)} "
               f"threshold_bound={_fmt(rep.threshold_bound)} relative_error={_fmt(err)}")
    out = Outcome(["iteration", "residual"], rows, passed, summary)
    if not rep.converged:
        out.numeric_failure = True
    return out


def cmd_determining_modes(cfg) -> Outcome:
    grid = _grid(cfg)
    C = cfg["lipschitz_C"]
    if C is None:
        C = empirical_lipschitz(_system(cfg, grid), cfg["sigma"], cfg["epsilon"], 3.0 * cfg["R0"], seed=cfg["seed"])
    thr = determining_threshold(C, cfg["T"], cfg["epsilon"], grid)
    rows = [[n, threshold_bound(C, cfg["T"], cfg["epsilon"], grid, n)] for n in range(grid.N)]
    summary = (f"determining-modes: {'FAIL' if thr.overflow else 'PASS'} lipschitz_C={_fmt(C)} "
               f"threshold_n={thr.n} overflow={int(thr.overflow)}")
    return Outcome(["n", "threshold_bound"], rows, not thr.overflow, summary)


def cmd_plate_transfer(cfg) -> Outcome:
    grid = _grid(cfg)
    T = cfg["T"]
    start = cfg["t_inner_start"] if cfg["t_inner_start"] is not None else 0.25 * T
    end = cfg["t_inner_end"] if cfg["t_inner_end"] is not None else 0.75 * T
    profile = CutoffProfile(start, end, T, cfg["profile_sharpness"])
    bump = _bump(cfg, grid)
    freq = 2.0 * grid.eigenvalues[-1]
    M = max(cfg["M"], int(math.ceil(4.0 * T * freq)))
    tg = TimeGrid(T, M)
    inner_M = max(2048, int(math.ceil(4.0 * profile.inner_length * freq)))
    schr = schrodinger_gramian(grid, bump, TimeGrid(profile.inner_length, inner_M)).lambda_min
    tr = plate_weak_observability_constant(grid, bump, profile, tg, schr)
    ucp = eigen_ucp_check(bump, grid)
    rows = [["schrodinger_lambda_min", schr], ["ucp_min_mass", ucp], ["c", tr.c], ["interaction", tr.interaction],
            ["remainder", tr.remainder], ["lower_bound", tr.lower_bound],
            ["direct_lambda_min", tr.direct_lambda_min]]
    passed = tr.direct_lambda_min > 0
    summary = (f"plate-transfer: {'PASS' if passed else 'FAIL'} direct_lambda_min={_fmt(tr.direct_lambda_min)} "
               f"lower_bound={_fmt(tr.lower_bound)} inconclusive={int(tr.inconclusive)}")
    return Outcome(["quantity", "value"], rows, passed, summary)


def cmd_obs_ratio(cfg) -> Outcome:
    grid, tg = _grid(cfg), _time_grid(cfg)
    res = nonlinear_obs_ratio(_system(cfg, grid), _bump(cfg, grid), tg, cfg["R0"], cfg["samples"], cfg["seed"],
                              cfg["scheme"])
    return _from_result(res, ["ratio", "initial_energy"])


def cmd_gain_check(cfg) -> Outcome:
    grid = _grid(cfg)
    res = nonlinearity_gain(_system(cfg, grid), cfg["sigma"], cfg["epsilon"], cfg["R0"], max(cfg["samples"], 10),
                            cfg["seed"])
    return _from_result(res, ["norm", "lipschitz"])


def cmd_end_to_end(cfg) -> Outcome:
    grid, tg = _grid(cfg), _time_grid(cfg)
    obs = _window(cfg, "omega", "obs_margin")
    if obs is None:
        raise ConfigError("end-to-end needs an interior observation window, not omega=full")
    res = end_to_end_reconstruction(grid, Polynomial(cfg["f"]), tg, cfg["n"], cfg["sigma"],
                                    _window(cfg, "chi_omega", "chi_margin"), obs, cfg["R0"],
                                    equilibrium=cfg["equilibrium"], fp_tol=cfg["fp_tol"], max_iter=cfg["max_iter"],
                                    epsilon=cfg["epsilon"])
    out = _from_result(res)
    if not res.scalars.get("converged", 0.0):
        out.numeric_failure = True
    return out


def cmd_suite(cfg) -> Outcome:
    rows = []
    all_pass = True
    lines = []
    for k, res in run_suite(cfg["seed"]):
        for key, rel, thr in res.checks:
            ok = {"<": res.scalars[key] < thr, "<=": res.scalars[key] <= thr,
                  ">": res.scalars[key] > thr, ">=": res.scalars[key] >= thr}[rel]
            rows.append([k, res.name, key, res.scalars[key], rel, thr, int(ok)])
        all_pass &= res.verdict
        lines.append(f"{k}:{'PASS' if res.verdict else 'FAIL'}")
    return Outcome(["criterion", "name", "quantity", "value", "relation", "threshold", "pass"], rows, all_pass,
                   f"suite: {'PASS' if all_pass else 'FAIL'} " + " ".join(lines))


COMMANDS = {
    "simulate": cmd_simulate,
    "gramian": cmd_gramian,
    "gcc-time": cmd_gcc,
    "reconstruct-linear": cmd_reconstruct_linear,
    "reconstruct-fixed-point": cmd_reconstruct_fixed_point,
    "determining-modes": cmd_determining_modes,
    "plate-transfer": cmd_plate_transfer,
    "obs-ratio": cmd_obs_ratio,
    "gain-check": cmd_gain_check,
    "end-to-end": cmd_end_to_end,
    "suite": cmd_suite,
}

NUMERIC_ERRORS = (FixedPointError, NotObservableError, IntegrationError, BallViolationError, UnderResolvedError,
                  np.linalg.LinAlgError, FloatingPointError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wave-observe", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--out", help="CSV output path (default: config 'output', else stdout)")
    p.add_argument("--seed", type=int, help="random seed, overrides the config value")
    return p


def run(subcommand: str, config_path: str | None = None, out: str | None = None, seed: int | None = None,
        stdout=None, stderr=None) -> int:
    """Execute one subcommand and return its exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    if subcommand not in COMMANDS:
        print(f"error: unknown subcommand {subcommand!r}", file=stderr)
        return EXIT_USAGE
    try:
        text = ""
        if config_path is not None:
            with open(config_path, encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(text, REQUIRED[subcommand])
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = seed
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE

    code = EXIT_PASS
    try:
        outcome = COMMANDS[subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"{subcommand}: numerical failure: {exc}", file=stderr)
        report = getattr(exc, "report", None)
        if report is None:
            return EXIT_NUMERIC
        outcome = Outcome(["iteration", "residual"], [[k, r] for k, r in enumerate(report.residuals)], False,
                          f"{subcommand}: FAIL numerical failure")
        outcome.numeric_failure = True
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE

    target = out or cfg["output"]
    buf = io.StringIO()
    write_csv(buf, outcome.header, outcome.rows)
    if target:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        print(outcome.summary, file=stdout)
    else:
        stdout.write(buf.getvalue())
        print(outcome.summary, file=stderr)
    if getattr(outcome, "numeric_failure", False):
        code = EXIT_NUMERIC
    elif not outcome.passed:
        code = EXIT_FAIL
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    return run(args.subcommand, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
