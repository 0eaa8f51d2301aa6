import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fvrom.cli import main

SMOKE = [
    "--set", "mesh.cylinder=false", "--set", "mesh.length=1.0",
    "--set", "mesh.height=1.0", "--set", "mesh.target_h=0.5",
    "--set", "time.t_end=0.02", "--set", "time.dt=0.01",
    "--set", "time.snapshot_dt=0.01",
    "--set", "model.amplitude=constant", "--set", "model.amplitude_value=1.0",
    "--set", "rom.energy_threshold=1.0",
]


def run_cli(ws, args):
    return main(["--workspace", str(ws)] + args)


def run_full_pipeline(ws):
    for cmd in ("mesh", "fom", "pod", "offline", "online", "report"):
        code = run_cli(ws, SMOKE + [cmd])
        assert code == 0, f"stage {cmd} failed"


def test_missing_prerequisite_exit_code(tmp_path, capsys):
    code = run_cli(tmp_path / "ws", SMOKE + ["pod"])
    assert code == 3
    err = capsys.readouterr().err
    assert "run `fvrom" in err


def test_config_error_exit_code(tmp_path):
    code = main(["--workspace", str(tmp_path / "ws"),
                 "--set", "model.kind=bogus", "mesh"])
    assert code == 2
    code = main(["--workspace", str(tmp_path / "ws"),
                 "--set", "nonsense.key=1", "mesh"])
    assert code == 2


def test_config_file_parse_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[mesh\nlength = 1.0\n")
    code = main(["--config", str(bad), "--workspace", str(tmp_path / "ws"),
                 "mesh"])
    assert code == 2


def test_full_pipeline_trivial_mesh(tmp_path):
    ws = tmp_path / "ws"
    run_full_pipeline(ws)
    # report exists, projection rows vanish for a full-rank basis
    errors = (ws / "report_errors.csv").read_text().splitlines()
    header = errors[0].split(",")
    proj_col = header.index("projection_avg")
    for line in errors[1:]:
        cells = line.split(",")
        if cells[0] in ("velocity", "filtered_velocity", "pressure",
                        "filter_pressure"):
            assert float(cells[proj_col]) <= 1e-5
    # trajectory header follows the documented wire format
    header = (ws / "rom_trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,beta_1")
    assert "gamma_1" in header and "betabar_1" in header \
        and "gammabar_1" in header
    ts_header = (ws / "fom_timeseries.csv").read_text().splitlines()[0]
    assert ts_header == "t,cd,cl,Kv,Ku"


def test_manifest_partition(tmp_path):
    ws = tmp_path / "ws"
    run_full_pipeline(ws)
    manifests = sorted(ws.glob("*_manifest.json"))
    assert len(manifests) == 6
    listed = {}
    for mpath in manifests:
        data = json.loads(mpath.read_text())
        for name in data["outputs"]:
            assert name not in listed, f"{name} listed twice"
            listed[name] = data["stage"]
            assert data["outputs"][name]  # checksum present
    produced = {p.name for p in ws.iterdir()
                if p.is_file() and not p.name.endswith("_manifest.json")}
    assert produced == set(listed)


def test_reproducibility_byte_identical(tmp_path):
    ws1, ws2 = tmp_path / "a", tmp_path / "b"
    run_full_pipeline(ws1)
    run_full_pipeline(ws2)
    for name in ("mesh.txt", "snapshots.fvra", "basis.fvra", "operators.fvra",
                 "rom_trajectory.csv", "rom_timeseries.csv",
                 "fom_timeseries.csv", "report.txt", "report_errors.csv"):
        assert (ws1 / name).read_bytes() == (ws2 / name).read_bytes(), name


def test_sweep_single_alpha_degeneracy(tmp_path):
    plain = tmp_path / "plain"
    run_full_pipeline(plain)
    sweep = tmp_path / "sweep"
    args = SMOKE + ["--set", "sweep.alpha_values=0.0032", "sweep"]
    code = run_cli(sweep, args)
    assert code == 0
    for name in ("snapshots.fvra", "basis.fvra", "operators.fvra"):
        assert (sweep / name).read_bytes() == (plain / name).read_bytes(), name


def test_rank_error_is_numerical_exit(tmp_path):
    ws = tmp_path / "ws"
    assert run_cli(ws, SMOKE + ["mesh"]) == 0
    assert run_cli(ws, SMOKE + ["fom"]) == 0
    args = [a.replace("rom.energy_threshold=1.0", "rom.rank_velocity=50")
            for a in SMOKE]
    code = run_cli(ws, args + ["pod"])
    assert code == 4


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fvrom", "--workspace",
         str(tmp_path / "ws")] + SMOKE + ["mesh"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "cells" in proc.stdout


def test_vtk_field_output(tmp_path):
    ws = tmp_path / "ws"
    for cmd in ("mesh", "fom", "pod", "offline"):
        assert run_cli(ws, SMOKE + [cmd]) == 0
    assert run_cli(ws, SMOKE + ["--set", "output.fields=sampled",
                                "online"]) == 0
    vtks = sorted((ws / "fields").glob("rom_*.vtk"))
    assert len(vtks) == 3  # t0 + 2 sampled steps
    text = vtks[0].read_text()
    assert "VECTORS velocity double" in text
