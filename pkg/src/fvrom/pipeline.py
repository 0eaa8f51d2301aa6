"""End-to-end stages shared by the command-line driver and the test suite.

Each stage is a plain function from configuration plus in-memory inputs to
in-memory outputs; file handling and manifests live in the CLI layer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fom, lifting as lifting_mod, metrics, pod, rom_offline, rom_online
from .fvops import divergence
from .config import PipelineConfig
from .fields import CellField, homogenized_bcs
from .mesh import ChannelGeometry, Mesh, generate_channel_cylinder_mesh, \
    generate_channel_mesh
from .meshio import load_mesh
from .snapshots import FIELD_NAMES, SnapshotSet

FIELD_LABELS = {
    "velocity": "velocity",
    "filtered_velocity": "filtered velocity",
    "pressure": "pressure",
    "filter_pressure": "filter pressure",
}


def build_mesh(cfg: PipelineConfig) -> Mesh:
    if cfg.mesh_source == "file":
        return load_mesh(cfg.mesh_path)
    if cfg.cylinder:
        geom = ChannelGeometry(cfg.length, cfg.height,
                               (cfg.cylinder_x, cfg.cylinder_y),
                               cfg.cylinder_radius, depth=cfg.depth)
        return generate_channel_cylinder_mesh(geom, cfg.target_h)
    return generate_channel_mesh(cfg.length, cfg.height, cfg.target_h,
                                 depth=cfg.depth)


def build_case(cfg: PipelineConfig, mesh: Mesh) -> fom.CaseSetup:
    if cfg.inflow == "parabolic":
        if mesh.dimension == 3:
            profile = fom.parabolic_inflow_3d(cfg.height, cfg.depth)
        else:
            profile = fom.parabolic_inflow_2d(cfg.height)
    elif cfg.inflow == "plug":
        profile = fom.plug_inflow()
    else:
        profile = None
    if cfg.amplitude == "ramp":
        amp = fom.ramp_amplitude(cfg.amplitude_period)
    else:
        amp = fom.constant_amplitude(cfg.amplitude_value)
    return fom.CaseSetup(mesh, profile, amp)


def solver_controls(cfg: PipelineConfig) -> fom.SolverControls:
    return fom.SolverControls(
        momentum_rtol=cfg.momentum_rtol, pressure_rtol=cfg.pressure_rtol,
        piso_correctors=cfg.piso_correctors,
        nonorth_correctors=cfg.nonorth_correctors,
        simplec_rtol=cfg.simplec_rtol, simplec_maxiter=cfg.simplec_maxiter,
        divergence_tol=cfg.divergence_tol)


def build_lifting(cfg: PipelineConfig, mesh: Mesh,
                  case: fom.CaseSetup) -> lifting_mod.LiftingSet:
    return lifting_mod.build_lifting(mesh, case.lifting_profile())


@dataclass
class FOMRun:
    snapshots: SnapshotSet
    timeseries: dict                    # t, cd, cl, Kv, Ku arrays
    diagnostics: dict = field(default_factory=dict)


def run_fom(cfg: PipelineConfig, mesh: Mesh, case: fom.CaseSetup,
            lifting_set: lifting_mod.LiftingSet, alpha=None) -> FOMRun:
    """Time-march the configured model and collect homogenized snapshots."""
    alpha = cfg.alpha if alpha is None else alpha
    props = fom.FluidProperties(cfg.rho, cfg.mu)
    filt = fom.FilterParams(alpha)
    ts = fom.TimeSetup(cfg.t0, cfg.t_end, cfg.dt, cfg.snapshot_dt)
    solver = fom.FlowSolver(mesh, props, solver_controls(cfg))
    state = fom.initial_state(mesh, case, cfg.t0)
    has_cyl = any(p.kind == "cylinder" for p in mesh.patches)

    cols = {name: [] for name in FIELD_NAMES}
    times, amps, cds, cls_, kvs, kus = [], [], [], [], [], []
    div_max = 0.0
    cfl_max = 0.0

    def record(st: fom.FOMState):
        a = case.amplitude(st.time)
        v_hom = lifting_mod.homogenize(st.vel.values, lifting_set, [a])
        u_hom = lifting_mod.homogenize(st.vel_filt.values, lifting_set, [a])
        cols["velocity"].append(v_hom.ravel())
        cols["filtered_velocity"].append(u_hom.ravel())
        cols["pressure"].append(st.pres.values.copy())
        cols["filter_pressure"].append(st.pres_filt.values.copy())
        times.append(st.time)
        amps.append(a)
        if has_cyl:
            cd, cl = metrics.drag_lift(
                st.vel_filt, st.pres, mesh, cfg.rho, cfg.mu,
                u_ref=cfg.u_ref, l_ref=cfg.l_ref, patch=cfg.drag_patch,
                convention=cfg.coefficient_convention)
        else:
            cd = cl = float("nan")
        cds.append(cd)
        cls_.append(cl)
        kvs.append(metrics.kinetic_energy(st.vel.values, cfg.rho,
                                          mesh.cell_volumes))
        kus.append(metrics.kinetic_energy(st.vel_filt.values, cfg.rho,
                                          mesh.cell_volumes))

    wall0 = time.perf_counter()
    record(state)
    for k in range(ts.n_steps):
        state = fom.advance(solver, state, case, filt, ts.dt, model=cfg.model)
        div_max = max(div_max, float(np.abs(
            divergence(mesh, state.conv_fluxes[0])).max()))
        cfl_max = max(cfl_max, fom.cfl_number(mesh, state.conv_fluxes[0],
                                              ts.dt))
        if (k + 1) % ts.sample_every == 0:
            record(state)
    wall = time.perf_counter() - wall0
    if cfl_max > fom.SolverControls().cfl_warn:
        import warnings
        warnings.warn(f"max CFL {cfl_max:.2f} exceeded "
                      f"{fom.SolverControls().cfl_warn}", RuntimeWarning)

    fields = {name: np.array(c).T if c else np.zeros((0, 0))
              for name, c in cols.items()}
    snap = SnapshotSet(
        fields, np.asarray(times), np.full(len(times), float(alpha)),
        np.asarray(amps), mesh.cell_volumes.copy(),
        meta={"model": cfg.model, "dt": ts.dt, "alpha": float(alpha),
              "rho": cfg.rho, "mu": cfg.mu, "dimension": mesh.dimension})
    series = {"t": np.asarray(times), "cd": np.asarray(cds),
              "cl": np.asarray(cls_), "Kv": np.asarray(kvs),
              "Ku": np.asarray(kus)}
    diag = {"wall_clock": wall, "div_max": div_max, "cfl_max": cfl_max,
            "steps": ts.n_steps}
    return FOMRun(snap, series, diag)


def run_pod(cfg: PipelineConfig, snap: SnapshotSet) -> dict:
    """POD basis per field, truncated by configured rank or energy."""
    ranks = {"velocity": cfg.rank_velocity,
             "filtered_velocity": cfg.rank_filtered_velocity,
             "pressure": cfg.rank_pressure,
             "filter_pressure": cfg.rank_filter_pressure}
    bases = {}
    for name in FIELD_NAMES:
        S = snap.fields[name]
        w = snap.weights_for(name)
        if cfg.energy_threshold is not None:
            bases[name] = pod.build_basis(S, w, energy=cfg.energy_threshold,
                                          meta={"field": name})
        else:
            bases[name] = pod.build_basis(S, w, rank=ranks[name],
                                          meta={"field": name})
    return bases


def bases_bundle(mesh: Mesh, case: fom.CaseSetup, bases: dict) \
        -> rom_offline.Bases:
    vel_bcs = homogenized_bcs(case.velocity_bcs(0.0))
    pres_bcs = case.pressure_bcs()
    return rom_offline.Bases(
        bases["velocity"], bases["filtered_velocity"], bases["pressure"],
        bases["filter_pressure"], vel_bcs, pres_bcs)


def run_offline(cfg: PipelineConfig, mesh: Mesh, case: fom.CaseSetup,
                bases: dict, lifting_set) -> rom_offline.ReducedOperators:
    bundle = bases_bundle(mesh, case, bases)
    meta = {"alpha": cfg.alpha, "dt": cfg.dt, "rho": cfg.rho, "mu": cfg.mu,
            "ppe_boundary_form": cfg.ppe_boundary_form}
    return rom_offline.assemble_reduced_operators(mesh, bundle, lifting_set,
                                                  meta=meta)


@dataclass
class ROMRun:
    trajectory: rom_online.ReducedTrajectory
    timeseries: dict
    reconstructed: dict                 # field -> (n_dof, n_samples)
    diagnostics: dict = field(default_factory=dict)


def run_online(cfg: PipelineConfig, mesh: Mesh, case: fom.CaseSetup,
               bases: dict, ops: rom_offline.ReducedOperators,
               lifting_set, snap: SnapshotSet, alpha=None) -> ROMRun:
    """Integrate the reduced system and reconstruct sampled fields."""
    alpha = cfg.alpha if alpha is None else alpha
    ts = fom.TimeSetup(cfg.t0, cfg.t_end, cfg.dt, cfg.snapshot_dt)
    beta0 = pod.project(snap.fields["velocity"][:, 0], bases["velocity"])
    bbar0 = pod.project(snap.fields["filtered_velocity"][:, 0],
                        bases["filtered_velocity"])
    init = rom_online.initial_reduced_state(
        ops, beta0, bbar0, amplitude0=case.amplitude(cfg.t0), t0=cfg.t0)
    wall0 = time.perf_counter()
    traj = rom_online.run_rom(ops, cfg.rho, cfg.mu, alpha, ts.dt, ts.n_steps,
                              case.amplitude, t0=cfg.t0, initial=init,
                              ppe_form=cfg.ppe_boundary_form)
    wall = time.perf_counter() - wall0

    sample_idx = np.arange(0, ts.n_steps + 1, ts.sample_every)
    recon = {name: np.zeros((snap.fields[name].shape[0], len(sample_idx)))
             for name in FIELD_NAMES}
    t_s, cds, cls_, kvs, kus = [], [], [], [], []
    has_cyl = any(p.kind == "cylinder" for p in mesh.patches)
    vel_bcs_t = None
    for col, k in enumerate(sample_idx):
        t = traj.times[k]
        a = case.amplitude(t)
        v = pod.reconstruct(traj.vel[k], bases["velocity"])
        u = pod.reconstruct(traj.filt_vel[k], bases["filtered_velocity"])
        v_full = lifting_mod.reapply_lifting(v.reshape(-1, 3), lifting_set, [a])
        u_full = lifting_mod.reapply_lifting(u.reshape(-1, 3), lifting_set, [a])
        q = pod.reconstruct(traj.pres[k], bases["pressure"])
        qb = pod.reconstruct(traj.filt_pres[k], bases["filter_pressure"])
        recon["velocity"][:, col] = v_full.ravel()
        recon["filtered_velocity"][:, col] = u_full.ravel()
        recon["pressure"][:, col] = q
        recon["filter_pressure"][:, col] = qb
        t_s.append(t)
        if has_cyl:
            vel_bcs_t = case.velocity_bcs(t)
            uf = CellField(mesh, u_full, vel_bcs_t)
            qf = CellField(mesh, q, case.pressure_bcs())
            cd, cl = metrics.drag_lift(
                uf, qf, mesh, cfg.rho, cfg.mu, u_ref=cfg.u_ref,
                l_ref=cfg.l_ref, patch=cfg.drag_patch,
                convention=cfg.coefficient_convention)
        else:
            cd = cl = float("nan")
        cds.append(cd)
        cls_.append(cl)
        kvs.append(metrics.kinetic_energy(v_full, cfg.rho, mesh.cell_volumes))
        kus.append(metrics.kinetic_energy(u_full, cfg.rho, mesh.cell_volumes))
    series = {"t": np.asarray(t_s), "cd": np.asarray(cds),
              "cl": np.asarray(cls_), "Kv": np.asarray(kvs),
              "Ku": np.asarray(kus)}
    diag = {"wall_clock": wall, "steps": ts.n_steps,
            "div_indicator_max": float(traj.divergence_indicator.max())}
    return ROMRun(traj, series, recon, diag)


def build_report(cfg: PipelineConfig, snap: SnapshotSet, bases: dict,
                 lifting_set, fom_series: dict, rom: ROMRun) \
        -> metrics.ErrorReport:
    """Error tables comparing de-homogenized FOM snapshots with the ROM."""
    n_cols = min(snap.n_samples, rom.reconstructed["velocity"].shape[1])
    field_errors = {}
    for name in FIELD_NAMES:
        S = snap.fields[name][:, :n_cols].copy()
        if name in ("velocity", "filtered_velocity"):
            for k in range(n_cols):
                S[:, k] = lifting_mod.reapply_lifting(
                    S[:, k].reshape(-1, 3), lifting_set,
                    [snap.amplitudes[k]]).ravel()
        errs, _ = metrics.error_series(S, rom.reconstructed[name][:, :n_cols],
                                       snap.weights_for(name), snap.times)
        field_errors[name] = errs
    energy_errors = {}
    for key, label in (("Kv", "kinetic_energy_velocity"),
                       ("Ku", "kinetic_energy_filtered")):
        ef = fom_series[key][:n_cols]
        er = rom.timeseries[key][:n_cols]
        vals = np.array([metrics.kinetic_energy_error(f, r)
                         for f, r in zip(ef, er)])
        vals[ef == 0.0] = np.nan
        energy_errors[label] = vals
    report = metrics.ErrorReport(snap.times[:n_cols], field_errors,
                                 energy_errors)
    for key in ("cd", "cl"):
        f_series = fom_series[key][:n_cols]
        r_series = rom.timeseries[key][:n_cols]
        if np.all(np.isnan(f_series)):
            continue
        c_err, t_err = metrics.peak_errors(f_series, r_series,
                                           snap.times[:n_cols])
        i_f = int(np.nanargmax(f_series))
        i_r = int(np.nanargmax(r_series))
        report.peaks[key] = {
            "fom_max": float(f_series[i_f]), "fom_t": float(snap.times[i_f]),
            "rom_max": float(r_series[i_r]), "rom_t": float(snap.times[i_r]),
            "value_error": c_err, "time_error": t_err,
        }
    # best-achievable (projection) errors of the snapshots onto each basis
    proj = {}
    for name in FIELD_NAMES:
        S = snap.fields[name][:, :n_cols]
        w = snap.weights_for(name)
        vals = []
        for k in range(n_cols):
            denom = metrics.weighted_norm(S[:, k], w)
            if denom == 0.0:
                vals.append(np.nan)
                continue
            vals.append(pod.projection_error(S[:, k], bases[name]) / denom)
        proj[name] = np.asarray(vals)
    report.projection_errors = proj
    return report.finalize()
