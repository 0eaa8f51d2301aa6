"""Command-line pipeline driver.

Stages write their artifacts into a workspace directory together with a
`<stage>_manifest.json` listing inputs, outputs (with sha256 checksums) and
the configuration snapshot. Artifact files are byte-deterministic for a
fixed configuration; timing numbers live only in the manifest diagnostics.

Exit codes: 0 success, 2 configuration error, 3 missing prerequisite
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .arrayio import file_sha256, load_archive, save_archive
from .config import (ConfigError, PipelineConfig, config_from_snapshot,
                     config_snapshot, load_config)
from .fom import NumericsError
from .mesh import mesh_quality
from .meshio import MeshFormatError, load_mesh, save_mesh
from .mesh import MeshValidationError
from .pod import PODBasis, RankError
from .rom_offline import ReducedOperators
from .snapshots import FIELD_NAMES, SnapshotSet, pool_snapshots
from .sparsesolve import SolverError
from .vtkout import write_vtk

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICS = 4


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path, needed_by, produced_by):
        self.path = path
        super().__init__(
            f"{needed_by}: missing prerequisite '{path}'; "
            f"run `fvrom {produced_by}` first")


def _require(ws: Path, name: str, needed_by: str, produced_by: str) -> Path:
    p = ws / name
    if not p.exists():
        raise MissingArtifactError(p, needed_by, produced_by)
    return p


def _fmt_float(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_float(v) if isinstance(v, float)
                              else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path: Path):
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(tok) for tok in line.split(",")]
                     for line in lines[1:]])
    return header, data


def write_manifest(ws: Path, stage: str, cfg: PipelineConfig, inputs,
                   outputs, diagnostics=None):
    manifest = {
        "stage": stage,
        "version": __version__,
        "config": config_snapshot(cfg),
        "inputs": {str(Path(p).name): file_sha256(p) for p in inputs},
        "outputs": {str(Path(p).name): file_sha256(p) for p in outputs},
        "diagnostics": diagnostics or {},
    }
    path = ws / f"{stage}_manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n",
                    encoding="utf-8")
    return path


def read_manifest(ws: Path, stage: str) -> dict:
    p = ws / f"{stage}_manifest.json"
    if not p.exists():
        raise MissingArtifactError(p, "report", stage)
    return json.loads(p.read_text(encoding="utf-8"))


# -- stages -------------------------------------------------------------------


def cmd_mesh(cfg: PipelineConfig, ws: Path) -> int:
    mesh = pipeline.build_mesh(cfg)
    out = ws / "mesh.txt"
    save_mesh(mesh, out)
    q = mesh_quality(mesh)
    qpath = ws / "mesh_quality.txt"
    qpath.write_text(str(q) + "\n", encoding="utf-8")
    inputs = [cfg.mesh_path] if cfg.mesh_source == "file" else []
    write_manifest(ws, "mesh", cfg, inputs, [out, qpath])
    print(f"mesh: {mesh.n_cells} cells, {mesh.n_faces} faces -> {out}")
    return 0


def _load_stage_mesh(cfg, ws, needed_by):
    path = _require(ws, "mesh.txt", needed_by, "mesh")
    return load_mesh(path), path


def cmd_fom(cfg: PipelineConfig, ws: Path, alpha=None, tag="") -> int:
    mesh, mesh_path = _load_stage_mesh(cfg, ws, "fom")
    case = pipeline.build_case(cfg, mesh)
    lifting_set = pipeline.build_lifting(cfg, mesh, case)
    run = pipeline.run_fom(cfg, mesh, case, lifting_set, alpha=alpha)

    snap_path = ws / f"snapshots{tag}.fvra"
    run.snapshots.save(snap_path)
    lift_path = ws / "lifting.fvra"
    lf = lifting_set.fields[0]
    save_archive(lift_path,
                 {"values": lf.field.values, "flux": lf.flux},
                 meta={"n_fields": len(lifting_set.fields)})
    ts_path = ws / f"fom_timeseries{tag}.csv"
    s = run.timeseries
    write_csv(ts_path, ["t", "cd", "cl", "Kv", "Ku"],
              zip(s["t"].tolist(), s["cd"].tolist(), s["cl"].tolist(),
                  s["Kv"].tolist(), s["Ku"].tolist()))
    write_manifest(ws, f"fom{tag}", cfg, [mesh_path],
                   [snap_path, lift_path, ts_path], run.diagnostics)
    print(f"fom: {run.snapshots.n_samples} snapshots, "
          f"max divergence {run.diagnostics['div_max']:.3e}, "
          f"wall clock {run.diagnostics['wall_clock']:.1f}s")
    return 0


def _load_lifting(ws, mesh, cfg, needed_by):
    from .fields import CellField
    from .lifting import LiftingField, LiftingSet
    path = _require(ws, "lifting.fvra", needed_by, "fom")
    arrays, _ = load_archive(path)
    case = pipeline.build_case(cfg, mesh)
    # carrier boundary data: unit-amplitude inflow profile
    from .fields import dirichlet, zero_gradient
    bcs = {}
    for p in mesh.patches:
        if p.kind == "inlet":
            centers = mesh.face_centers[p.start:p.start + p.count]
            bcs[p.name] = dirichlet(case.lifting_profile()(centers)
                                    if case.lifting_profile() else
                                    np.zeros((p.count, 3)))
        elif p.kind == "outlet":
            bcs[p.name] = zero_gradient()
        else:
            bcs[p.name] = dirichlet(np.zeros(3))
    field = CellField(mesh, arrays["values"], bcs)
    return LiftingSet([LiftingField(field, arrays["flux"])]), path


def cmd_pod(cfg: PipelineConfig, ws: Path) -> int:
    snap_path = _require(ws, "snapshots.fvra", "pod", "fom")
    snap = SnapshotSet.load(snap_path)
    bases = pipeline.run_pod(cfg, snap)
    arrays, meta = {}, {"ranks": {}}
    outputs = []
    for name, basis in bases.items():
        arrays[f"{name}_modes"] = basis.modes
        arrays[f"{name}_eigenvalues"] = basis.eigenvalues
        arrays[f"{name}_weights"] = basis.weights
        meta["ranks"][name] = basis.rank
        csv_path = ws / f"eigenvalues_{name}.csv"
        curve = basis.cumulative_energy
        write_csv(csv_path, ["index", "lambda", "cumulative"],
                  [(i + 1, float(l), float(c))
                   for i, (l, c) in enumerate(zip(basis.eigenvalues, curve))])
        outputs.append(csv_path)
    basis_path = ws / "basis.fvra"
    save_archive(basis_path, arrays, meta=meta)
    write_manifest(ws, "pod", cfg, [snap_path], [basis_path] + outputs)
    print("pod ranks:", {k: b.rank for k, b in bases.items()})
    return 0


def _load_bases(ws, needed_by) -> dict:
    path = _require(ws, "basis.fvra", needed_by, "pod")
    arrays, meta = load_archive(path)
    bases = {}
    for name in FIELD_NAMES:
        modes = arrays[f"{name}_modes"]
        bases[name] = PODBasis(
            modes, arrays[f"{name}_eigenvalues"], np.zeros((0, 0)),
            arrays[f"{name}_weights"], modes.shape[1],
            meta={"field": name})
    return bases, path


def cmd_offline(cfg: PipelineConfig, ws: Path) -> int:
    mesh, mesh_path = _load_stage_mesh(cfg, ws, "offline")
    bases, basis_path = _load_bases(ws, "offline")
    lifting_set, lift_path = _load_lifting(ws, mesh, cfg, "offline")
    case = pipeline.build_case(cfg, mesh)
    ops = pipeline.run_offline(cfg, mesh, case, bases, lifting_set)
    ops_path = ws / "operators.fvra"
    ops.save(ops_path)
    outputs = [ops_path]
    if cfg.operators_csv:
        csv_path = ws / "operators_summary.csv"
        rows = []
        for key in ("mass", "cross_mass", "laplacian", "grad_coupling",
                    "div_coupling", "filt_mass", "filt_laplacian",
                    "ppe_laplacian", "ppe_curl", "ppe_flux_v", "ppe_flux_u",
                    "ppe_filt_laplacian", "ppe_filt_curl"):
            arr = getattr(ops, key)
            for idx, val in np.ndenumerate(arr):
                rows.append((key, "x".join(map(str, idx)), float(val)))
        write_csv(csv_path, ["name", "index", "value"], rows)
        outputs.append(csv_path)
    write_manifest(ws, "offline", cfg, [mesh_path, basis_path, lift_path],
                   outputs)
    print(f"offline: reduced operators with ranks {ops.ranks} -> {ops_path}")
    return 0


def cmd_online(cfg: PipelineConfig, ws: Path, alpha=None, tag="") -> int:
    mesh, mesh_path = _load_stage_mesh(cfg, ws, "online")
    ops_path = _require(ws, "operators.fvra", "online", "offline")
    snap_path = _require(ws, "snapshots.fvra", "online", "fom")
    bases, basis_path = _load_bases(ws, "online")
    lifting_set, lift_path = _load_lifting(ws, mesh, cfg, "online")
    ops = ReducedOperators.load(ops_path)
    snap = SnapshotSet.load(snap_path)
    case = pipeline.build_case(cfg, mesh)
    rom = pipeline.run_online(cfg, mesh, case, bases, ops, lifting_set, snap,
                              alpha=alpha)
    traj_path = ws / f"rom_trajectory{tag}.csv"
    tr = rom.trajectory
    nv, nu, nq, nqb = ops.ranks
    header = (["t"] + [f"beta_{i+1}" for i in range(nv)]
              + [f"gamma_{i+1}" for i in range(nq)]
              + [f"betabar_{i+1}" for i in range(nu)]
              + [f"gammabar_{i+1}" for i in range(nqb)])
    rows = []
    for k in range(len(tr.times)):
        rows.append([float(tr.times[k])] + tr.vel[k].tolist()
                    + tr.pres[k].tolist() + tr.filt_vel[k].tolist()
                    + tr.filt_pres[k].tolist())
    write_csv(traj_path, header, rows)
    ts_path = ws / f"rom_timeseries{tag}.csv"
    s = rom.timeseries
    write_csv(ts_path, ["t", "cd", "cl", "Kv", "Ku"],
              zip(s["t"].tolist(), s["cd"].tolist(), s["cl"].tolist(),
                  s["Kv"].tolist(), s["Ku"].tolist()))
    outputs = [traj_path, ts_path]
    recon_path = ws / f"rom_fields{tag}.fvra"
    save_archive(recon_path, rom.reconstructed,
                 meta={"times": [float(t) for t in s["t"]]})
    outputs.append(recon_path)
    if cfg.fields_output == "sampled":
        vtk_dir = ws / "fields"
        vtk_dir.mkdir(exist_ok=True)
        for col, t in enumerate(s["t"]):
            data = {
                "velocity": rom.reconstructed["velocity"][:, col].reshape(-1, 3),
                "filtered_velocity":
                    rom.reconstructed["filtered_velocity"][:, col].reshape(-1, 3),
                "pressure": rom.reconstructed["pressure"][:, col],
                "filter_pressure": rom.reconstructed["filter_pressure"][:, col],
            }
            vtk_path = vtk_dir / f"rom{tag}_{col:04d}.vtk"
            write_vtk(vtk_path, mesh, data, title=f"rom fields t={t!r}")
            outputs.append(vtk_path)
    write_manifest(ws, f"online{tag}", cfg,
                   [mesh_path, ops_path, snap_path, basis_path, lift_path],
                   outputs, rom.diagnostics)
    print(f"online: {len(tr.times) - 1} steps, wall clock "
          f"{rom.diagnostics['wall_clock']:.2f}s -> {traj_path}")
    return 0


def cmd_report(cfg: PipelineConfig, ws: Path, tag="") -> int:
    mesh, mesh_path = _load_stage_mesh(cfg, ws, "report")
    snap_path = _require(ws, "snapshots.fvra", "report", "fom")
    recon_path = _require(ws, f"rom_fields{tag}.fvra", "report", "online")
    fomts_path = _require(ws, f"fom_timeseries{tag}.csv", "report", "fom")
    romts_path = _require(ws, f"rom_timeseries{tag}.csv", "report", "online")
    bases, basis_path = _load_bases(ws, "report")
    lifting_set, lift_path = _load_lifting(ws, mesh, cfg, "report")
    snap = SnapshotSet.load(snap_path)
    recon, recon_meta = load_archive(recon_path)
    _, fom_data = read_csv(fomts_path)
    _, rom_data = read_csv(romts_path)
    fom_series = {k: fom_data[:, i] for i, k in
                  enumerate(["t", "cd", "cl", "Kv", "Ku"])}
    rom_series = {k: rom_data[:, i] for i, k in
                  enumerate(["t", "cd", "cl", "Kv", "Ku"])}
    rom = pipeline.ROMRun(None, rom_series, recon)
    report = pipeline.build_report(cfg, snap, bases, lifting_set, fom_series,
                                   rom)

    err_path = ws / f"report_errors{tag}.csv"
    rows = []
    for name, st in sorted(report.stats.items()):
        proj = report.projection_errors.get(name)
        proj_avg = (float(np.nanmean(proj)) if proj is not None
                    and np.any(np.isfinite(proj)) else float("nan"))
        rows.append((name, st.maximum, st.minimum, st.average, proj_avg))
    write_csv(err_path, ["field", "max", "min", "avg", "projection_avg"], rows)
    peak_path = ws / f"report_peaks{tag}.csv"
    prows = []
    for key, pk in sorted(report.peaks.items()):
        prows.append((key, pk["fom_t"], pk["fom_max"], pk["rom_t"],
                      pk["rom_max"], pk["value_error"], pk["time_error"]))
    write_csv(peak_path, ["series", "fom_t", "fom_max", "rom_t", "rom_max",
                          "value_error", "time_error"], prows)

    lines = ["relative errors over sampling instants (min / avg / max):"]
    for name, st in sorted(report.stats.items()):
        lines.append(f"  {name:28s} {st.minimum:9.3e} / {st.average:9.3e} / "
                     f"{st.maximum:9.3e}")
    lines.append("peak statistics:")
    for key, pk in sorted(report.peaks.items()):
        lines.append(
            f"  {key}: fom max {pk['fom_max']:.6g} at t={pk['fom_t']:g}, "
            f"rom max {pk['rom_max']:.6g} at t={pk['rom_t']:g}, "
            f"value error {pk['value_error']:.4f}, "
            f"time error {pk['time_error']:.4f}")
    report_path = ws / f"report{tag}.txt"
    report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))

    diagnostics = {}
    try:
        fom_diag = read_manifest(ws, f"fom{tag}")["diagnostics"]
        rom_diag = read_manifest(ws, f"online{tag}")["diagnostics"]
        if fom_diag.get("wall_clock") and rom_diag.get("wall_clock"):
            diagnostics["speed_up"] = (fom_diag["wall_clock"]
                                       / rom_diag["wall_clock"])
            print(f"speed-up (fom/rom wall clock): "
                  f"{diagnostics['speed_up']:.1f}x")
    except MissingArtifactError:
        pass
    write_manifest(ws, f"report{tag}", cfg,
                   [snap_path, recon_path, fomts_path, romts_path,
                    basis_path, lift_path],
                   [err_path, peak_path, report_path], diagnostics)
    return 0


def _sweep_fom_worker(args):
    snapshot, ws_str, alpha = args
    cfg = config_from_snapshot(snapshot)
    ws = Path(ws_str)
    cmd_fom(cfg, ws, alpha=alpha)
    return alpha


def cmd_sweep(cfg: PipelineConfig, ws: Path) -> int:
    """Train across the filter-radius samples, evaluate at the held-out one."""
    alphas = list(cfg.alpha_values) or [cfg.alpha]
    test_alpha = cfg.alpha_test
    if not (ws / "mesh.txt").exists():
        cmd_mesh(cfg, ws)
    jobs = max(1, cfg.jobs)

    point_dirs = []
    tasks = []
    for a in alphas:
        sub = ws / f"train_alpha_{a:.6g}"
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "mesh.txt").write_bytes((ws / "mesh.txt").read_bytes())
        snap_cfg = config_snapshot(cfg)
        snap_cfg["alpha"] = float(a)
        point_dirs.append(sub)
        tasks.append((snap_cfg, str(sub), a))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_sweep_fom_worker, tasks))
    else:
        for t in tasks:
            _sweep_fom_worker(t)

    snaps = [SnapshotSet.load(sub / "snapshots.fvra") for sub in point_dirs]
    pooled = pool_snapshots(snaps)
    pooled_path = ws / "snapshots.fvra"
    pooled.save(pooled_path)
    (ws / "lifting.fvra").write_bytes(
        (point_dirs[0] / "lifting.fvra").read_bytes())
    write_manifest(ws, "fom", cfg,
                   [sub / "snapshots.fvra" for sub in point_dirs],
                   [pooled_path, ws / "lifting.fvra"],
                   {"pooled_from": len(point_dirs)})
    cmd_pod(cfg, ws)
    cmd_offline(cfg, ws)

    if test_alpha is None:
        print("sweep: pooled training artifacts ready; no test alpha set")
        return 0
    # evaluation: dedicated FOM at the held-out alpha + reduced run
    test_tag = "_test"
    test_snapshot = config_snapshot(cfg)
    test_snapshot["alpha"] = float(test_alpha)
    cfg_test = config_from_snapshot(test_snapshot)
    cmd_fom(cfg_test, ws, alpha=test_alpha, tag=test_tag)
    # the test snapshots feed initial conditions and the comparison
    test_snap_src = ws / f"snapshots{test_tag}.fvra"
    main_snap_backup = pooled_path.read_bytes()
    pooled_path.write_bytes(test_snap_src.read_bytes())
    try:
        cmd_online(cfg_test, ws, alpha=test_alpha, tag=test_tag)
        cmd_report(cfg_test, ws, tag=test_tag)
    finally:
        pooled_path.write_bytes(main_snap_backup)
    return 0


# -- entry point ----------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fvrom",
        description="Finite-volume filtered-flow solver with POD-Galerkin "
                    "reduced order models")
    parser.add_argument("--config", type=Path, default=None,
                        help="ini-style configuration file")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    parser.add_argument("--workspace", type=Path, default=Path("workspace"),
                        help="artifact directory")
    parser.add_argument("--jobs", type=int, default=None,
                        help="sweep worker processes")
    parser.add_argument("command",
                        choices=["mesh", "fom", "pod", "offline", "online",
                                 "report", "sweep"])
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.overrides)
        if args.jobs is not None:
            cfg.jobs = args.jobs
        ws = args.workspace
        ws.mkdir(parents=True, exist_ok=True)
        handler = {
            "mesh": cmd_mesh, "fom": cmd_fom, "pod": cmd_pod,
            "offline": cmd_offline, "online": cmd_online,
            "report": cmd_report,
        }
        if args.command == "sweep":
            return cmd_sweep(cfg, ws)
        return handler[args.command](cfg, ws)
    except (ConfigError, MeshFormatError, MeshValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericsError, SolverError, RankError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
