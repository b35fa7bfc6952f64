"""Command line interface: subcommands and exit codes."""

import subprocess
import sys

import pytest

from slabflow import bundled_scenario_paths
from slabflow.cli import main

HEAT = """\
[grid]
dim = 1
xmin = -0.125
xmax = 1.125
h = 0.03125

[time]
T = 0.1
slices = 2
substeps = 10

[domain]
type = moving_intervals
left = "0"
right = "1"

[flux]
type = linear_diffusion
p = 2

[data]
u0 = "sin(pi*x)"
psi = "0"

[output]
dir = {out}
"""

STALL = """\
[grid]
dim = 1
xmin = -0.25
xmax = 1.25
h = 0.0625

[time]
T = 10
slices = 1
substeps = 1

[domain]
type = moving_intervals
left = "0"
right = "1"

[flux]
type = p_laplacian
p = 4

[data]
u0 = "50*sin(7*pi*x)"
psi = "0"

[solver]
max_newton = 1
max_picard = 0

[output]
dir = {out}
"""

ADVERSARIAL_FLUX = """\
[flux]
type = custom
p = 2
a1 = "-xi1"
c = 1
alpha = 1
"""


def write_heat(tmp_path):
    cfg = tmp_path / "heat.cfg"
    cfg.write_text(HEAT.format(out=tmp_path / "out"))
    return str(cfg)


def test_run_writes_frames_and_exits_zero(tmp_path, capsys):
    code = main(["run", write_heat(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "wrote" in out
    assert (tmp_path / "out" / "manifest.txt").exists()
    assert (tmp_path / "out" / "frame_00000.txt").exists()


def test_missing_file_is_an_input_error(tmp_path, capsys):
    code = main(["run", str(tmp_path / "absent.cfg")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_invalid_scenario_is_an_input_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(HEAT.format(out=tmp_path).replace("p = 2", "p = 0.5")
                   .replace("linear_diffusion", "p_laplacian"))
    code = main(["run", str(cfg)])
    assert code == 2
    assert "p must exceed 1" in capsys.readouterr().err


def test_solver_stall_has_its_own_exit_code(tmp_path, capsys):
    cfg = tmp_path / "stall.cfg"
    cfg.write_text(STALL.format(out=tmp_path / "out"))
    code = main(["run", str(cfg)])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_check_flux_passes_builtin(tmp_path, capsys):
    code = main(["check-flux", write_heat(tmp_path), "--samples", "500"])
    assert code == 0
    out = capsys.readouterr().out
    assert "coercivity" in out


def test_check_flux_fails_adversarial(tmp_path, capsys):
    text = HEAT.format(out=tmp_path / "out")
    text = text.replace("[flux]\ntype = linear_diffusion\np = 2\n", ADVERSARIAL_FLUX)
    cfg = tmp_path / "adv.cfg"
    cfg.write_text(text)
    code = main(["check-flux", str(cfg), "--samples", "500"])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_check_flux_seed_changes_samples(tmp_path, capsys):
    path = write_heat(tmp_path)
    main(["check-flux", path, "--samples", "200", "--seed", "0"])
    first = capsys.readouterr().out
    main(["check-flux", path, "--samples", "200", "--seed", "0"])
    assert capsys.readouterr().out == first


def test_geometry_prints_jump_summary(tmp_path, capsys):
    cfg = tmp_path / "jump.cfg"
    text = HEAT.format(out=tmp_path / "out")
    text = text.replace('right = "1"', 'right = "1"\njumps = "0.05: 0, 1.4"')
    text = text.replace("xmax = 1.125", "xmax = 1.625")
    cfg.write_text(text)
    code = main(["geometry", str(cfg)])
    assert code == 0
    out = capsys.readouterr().out
    assert "jumps=1" in out
    assert "new=" in out


def test_verify_passes_on_heat(tmp_path, capsys):
    code = main(["verify", write_heat(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASS max_principle" in out
    assert "PASS energy" in out


def test_verify_with_second_datum_adds_l1_report(tmp_path, capsys):
    code = main(["verify", write_heat(tmp_path), "--u0b", "0.5*sin(pi*x)"])
    assert code == 0
    assert "l1_contraction" in capsys.readouterr().out


def test_refine_prints_levels(tmp_path, capsys):
    code = main(["refine", write_heat(tmp_path), "--levels", "2"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("delta") >= 2


def test_module_entry_point_runs():
    path = bundled_scenario_paths()["heat_fixed"]
    proc = subprocess.run(
        [sys.executable, "-m", "slabflow.cli", "geometry", path],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert "kind=moving_intervals" in proc.stdout
