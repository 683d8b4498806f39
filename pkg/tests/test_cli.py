import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wave_observe.cli import ConfigError, main, parse_config, run


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def invoke(tmp_path, sub, text, seed=None, name="out.csv"):
    out = str(tmp_path / name)
    stdout, stderr = io.StringIO(), io.StringIO()
    code = run(sub, write(tmp_path, text), out, seed, stdout=stdout, stderr=stderr)
    return code, out, stdout.getvalue(), stderr.getvalue()


def test_gramian_full_observation_closed_form(tmp_path):
    code, out, summary, _ = invoke(tmp_path, "gramian", "N=16\nT=2*pi\nM=4096\nsigma=0\nomega=full\n")
    assert code == 0 and summary.startswith("gramian: PASS")
    rows = read_csv(out)
    assert rows[0] == ["index", "mode", "component", "diagonal", "eigenvalue"]
    diag = np.array([float(r[3]) for r in rows[1:]])
    assert diag.size == 32 and np.abs(diag - math.pi).max() < 1e-8


def test_missing_key_names_it(tmp_path):
    code, _, _, err = invoke(tmp_path, "gramian", "N=16\nT=1\nM=64\nomega=full\n")
    assert code == 1 and "sigma" in err


def test_fixed_point_below_threshold_exits_3_with_report(tmp_path):
    cfg = "N=64\nT=7\nM=2048\nsigma=0.6\nn=1\nomega=0.5:1.5\nf=0,0,0,1\nR0=4\namplitude=3\n"
    code, out, summary, err = invoke(tmp_path, "reconstruct-fixed-point", cfg)
    assert code == 3
    rows = read_csv(out)
    assert rows[0] == ["iteration", "residual"] and len(rows) > 2
    assert "converged=0" in summary


def test_fixed_point_contraction_regime_passes(tmp_path):
    cfg = "N=64\nT=7\nM=2048\nsigma=0.6\nn=8\nomega=0.5:1.5\nf=0,0,0,1\nR0=0.5\n"
    code, out, summary, _ = invoke(tmp_path, "reconstruct-fixed-point", cfg)
    assert code == 0 and "converged=1" in summary


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("N=16\nbogus=1\n", "unknown key"),
        ("N=16\nN=32\n", "duplicate key"),
        ("N=sixteen\n", "cannot parse"),
        ("N=0\n", "must lie in 1..512"),
        ("just words\n", "expected key=value"),
        ("sigma=2\n", "sigma"),
        ("omega=1:2:3\n", "omega"),
    ],
)
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_config_comments_defaults_and_pi():
    cfg = parse_config("# header\nT = 2pi  # full period\nomega=0.5:1.5, 2:pi\n\nf=0,1,0,-1\n")
    assert cfg["T"] == pytest.approx(2 * math.pi)
    assert cfg["omega"] == ((0.5, 1.5), (2.0, math.pi))
    assert cfg["f"] == (0.0, 1.0, 0.0, -1.0)
    assert cfg["N"] == 64 and cfg["seed"] == 0
    assert parse_config("omega=full")["omega"] == "full"


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-1e6, 1e6, allow_nan=False), n=st.integers(1, 512))
def test_config_round_trips_numbers(x, n):
    cfg = parse_config(f"beta={abs(x)!r}\nN={n}\n")
    assert cfg["beta"] == abs(x) and cfg["N"] == n


def test_unusable_config_path(tmp_path):
    assert run("gcc-time", str(tmp_path / "missing.cfg"), stderr=io.StringIO()) == 1


def test_unknown_subcommand_and_bad_flags():
    assert run("nope", None, stderr=io.StringIO()) == 1
    assert main(["nope"]) == 1
    assert main(["suite", "--seed", "x"]) == 1


def test_seed_flag_overrides_and_determinism(tmp_path):
    cfg = "N=16\nT=7\nM=512\nomega=0.5:1.5\nR0=1\nsamples=10\nseed=1\n"
    a = invoke(tmp_path, "obs-ratio", cfg, None, "a.csv")
    b = invoke(tmp_path, "obs-ratio", cfg, None, "b.csv")
    c = invoke(tmp_path, "obs-ratio", cfg, 2, "c.csv")
    assert a[0] == b[0] == c[0] == 0
    assert open(a[1], "rb").read() == open(b[1], "rb").read()
    assert open(a[1], "rb").read() != open(c[1], "rb").read()
    assert "seed=2" in c[2]


def test_csv_has_round_trip_precision(tmp_path):
    code, out, _, _ = invoke(tmp_path, "gcc-time", "omega=0.5:1.5\n")
    rows = read_csv(out)
    assert code == 0 and float(rows[1][1]) == 2 * (math.pi - 1.5)
    assert rows[1][1] == "%.17g" % (2 * (math.pi - 1.5))


def test_stdout_output_when_no_path(tmp_path):
    stdout, stderr = io.StringIO(), io.StringIO()
    code = run("gcc-time", write(tmp_path, "omega=0.5:1.5\n"), None, None, stdout=stdout, stderr=stderr)
    assert code == 0 and stdout.getvalue().startswith("quantity,value\n")
    assert "gcc-time: PASS" in stderr.getvalue()


def test_output_key_in_config(tmp_path):
    target = tmp_path / "via_config.csv"
    code = run("gcc-time", write(tmp_path, f"omega=0.5:1.5\noutput={target}\n"), stdout=io.StringIO())
    assert code == 0 and target.exists()


def test_failing_verdict_exits_2(tmp_path):
    # an observation time far below the geometric control time cannot reconstruct
    cfg = "N=32\nT=0.05\nM=64\nsigma=0\nomega=0.5:1.5\n"
    code, _, summary, _ = invoke(tmp_path, "gramian", cfg)
    assert code == 2 and "FAIL" in summary


def test_singular_gramian_exits_3(tmp_path):
    cfg = "N=32\nT=0.05\nM=64\nsigma=0.6\nn=4\nomega=0.5:1.5\n"
    code, _, _, err = invoke(tmp_path, "reconstruct-linear", cfg)
    assert code == 3 and "singular" in err


@pytest.mark.parametrize(
    "sub,text",
    [
        ("simulate", "N=16\nT=1\nM=200\nsigma=0.5\nR0=1\n"),
        ("reconstruct-linear", "N=32\nT=7\nM=1024\nsigma=0.6\nn=8\nomega=0.5:1.5\n"),
        ("determining-modes", "N=64\nT=1\nepsilon=1\nlipschitz_C=10\n"),
        ("determining-modes", "N=16\nT=1\nepsilon=1\n"),
        ("plate-transfer", "N=16\nT=2\nomega=0.5:1.5\nt_inner_start=0.1\nt_inner_end=1.9\n"),
        ("gain-check", "N=16\nsigma=0.6\nepsilon=0.4\nR0=0.5\nsamples=20\n"),
        ("end-to-end", "N=32\nT=7\nM=2048\nn=8\nsigma=0.6\nomega=0.5:1.5\nchi_omega=0.4:2.7\nf=0,-1.2,0,1\nR0=1\n"),
    ],
)
def test_subcommands_pass(tmp_path, sub, text):
    code, out, summary, err = invoke(tmp_path, sub, text)
    assert code == 0, err + summary
    rows = read_csv(out)
    assert len(rows) >= 2 and all(len(r) == len(rows[0]) for r in rows)


def test_determining_modes_closed_form(tmp_path):
    code, out, summary, _ = invoke(tmp_path, "determining-modes", "N=64\nT=1\nepsilon=1\nlipschitz_C=10\n")
    assert "threshold_n=3" in summary
    rows = read_csv(out)
    assert float(rows[4][1]) == pytest.approx(10 / 17)


def test_end_to_end_rejects_full_window(tmp_path):
    text = "N=16\nT=7\nM=256\nn=4\nsigma=0.6\nomega=full\nchi_omega=0.4:2.7\nf=0,-1.2,0,1\nR0=1\n"
    assert invoke(tmp_path, "end-to-end", text)[0] == 1


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "omega=0.5:1.5\n")
    proc = subprocess.run([sys.executable, "-m", "wave_observe", "gcc-time", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("quantity,value")
