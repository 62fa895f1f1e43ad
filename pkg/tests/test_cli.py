import shutil
import subprocess

import pytest

from alesupg import cli, scenario
from alesupg.mesh import unit_square_mesh, write_mesh

CONFIG = """
[scenario]
name = tiny
mesh = builtin:unit_square:4
motion = example1
T = 0.02
dirichlet = 1: 0; 2: 0; 3: 0; 4: 0

[coefficients]
epsilon = 0.01
u0 = 16*x*(1 - x)*y*(1 - y)

[stepper]
dt = 0.01
"""

CONVERGE = """
[scenario]
name = conv
mesh = builtin:unit_square:4
T = 0.2
refine = time
dirichlet = 1: exact; 2: exact; 3: exact; 4: exact

[coefficients]
epsilon = 1
exact = (1 + x + 2*y)*sin(1 + t)
f = auto
u0 = exact

[stepper]
scheme = cn
dt = 0.1
"""


def test_run_config_succeeds(tmp_path, capsys):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(CONFIG)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    assert "steps           2" in capsys.readouterr().out
    assert (out / "tiny_ledger.csv").exists() and (out / "tiny_l2.csv").exists()


def test_run_preset_with_overrides(tmp_path, capsys):
    code = cli.main(["run", "--preset", "example1", "--mesh", "builtin:unit_square:4", "--T", "0.01", "--scheme", "cn", "--delta0", "0", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "example1_ledger.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(CONFIG.replace("dt = 0.01", ""))
    assert cli.main(["run", str(cfg)]) == 1
    assert "stepper.dt" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cn.ini"
    cfg.write_text(CONFIG.replace("dt = 0.01", "dt = 0.01\nscheme = cn\nstrict_cn = true"))
    assert cli.main(["run", str(cfg), "--dt", "0.025", "--T", "0.05", "--out", str(tmp_path / "o")]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(CONFIG)
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", str(cfg), "--out", str(blocker / "sub")]) == 3
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 3


def test_check_mesh(tmp_path, capsys):
    path = tmp_path / "sq.mesh"
    write_mesh(unit_square_mesh(3), path)
    assert cli.main(["check-mesh", str(path)]) == 0
    text = capsys.readouterr().out
    assert "nodes           16" in text and "cells           18" in text
    bad = tmp_path / "bad.mesh"
    bad.write_text("tri-mesh v1\nnodes 1\n0 0\n")
    assert cli.main(["check-mesh", str(bad)]) == 1


def test_converge(tmp_path, capsys):
    cfg = tmp_path / "conv.ini"
    cfg.write_text(CONVERGE)
    assert cli.main(["converge", str(cfg), "--levels", "2"]) == 0
    assert "refine = time" in capsys.readouterr().out


def test_write_config_round_trip(tmp_path, capsys):
    path = tmp_path / "e2.ini"
    assert cli.main(["write-config", "example2", str(path)]) == 0
    assert scenario.parse_config(path) == scenario.preset("example2")


@pytest.mark.skipif(shutil.which("solver") is None, reason="console script not installed")
def test_console_script_entry_point():
    proc = subprocess.run(["solver", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "check-mesh" in proc.stdout
