"""Quantitative comparison of full-order and reduced solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import CellField
from .fvops import boundary_face_values, green_gauss_gradient
from .mesh import Mesh


def weighted_norm(values, weights) -> float:
    v = np.asarray(values, dtype=float).ravel()
    return float(np.sqrt(np.sum(weights * v * v)))


def relative_l2_error(fom_values, rom_values, weights) -> float:
    """||fom - rom||_w / ||fom||_w; zero when both fields vanish."""
    denom = weighted_norm(fom_values, weights)
    num = weighted_norm(np.asarray(fom_values, float).ravel()
                        - np.asarray(rom_values, float).ravel(), weights)
    if denom == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / denom


def kinetic_energy(values, rho, volumes) -> float:
    v = np.asarray(values, dtype=float).reshape(len(volumes), -1)
    return float(0.5 * rho * np.sum(volumes * np.sum(v * v, axis=1)))


def kinetic_energy_error(k_fom, k_rom) -> float:
    if k_fom == 0.0:
        return 0.0 if k_rom == 0.0 else np.inf
    return abs(k_fom - k_rom) / k_fom


def drag_lift(vel: CellField, pres: CellField, mesh: Mesh, rho, mu,
              u_ref=1.0, l_ref=0.1, patch="cylinder",
              convention="force-component"):
    """Drag and lift coefficients from the surface traction on one patch.

    The traction (2 mu grad(u) - q I) . n uses one-sided owner-cell gradients
    with boundary-condition face values. `convention` selects how the traction
    is turned into coefficients:

    * ``force-component``: c_d from the x force component, c_l from y.
    * ``printed``: c_d from the tangential projection and c_l from the normal
      projection of the traction (tangent = normal rotated -90 deg in-plane).

    On a closed surface with constant pressure and zero velocity the
    force-component coefficients vanish identically; the printed normal
    projection does not, which is why force-component is the default.
    """
    p = mesh.patch(patch)
    faces = np.arange(p.start, p.start + p.count)
    owners = mesh.owner[faces]
    areas = mesh.face_areas[faces]
    mags = mesh.face_area_mags[faces]
    # boundary face area vectors point out of the fluid; the traction the
    # fluid exerts on the body uses the body-outward normal, i.e. -A/|A|
    normals = -areas / mags[:, None]

    grad = green_gauss_gradient(vel)[owners]          # (n, comp, dx)
    ni = mesh.n_internal
    q_face = boundary_face_values(pres)[faces - ni]
    traction = 2.0 * mu * np.einsum("fcd,fd->fc", grad, normals)
    traction -= q_face[:, None] * normals
    scale = 2.0 / (rho * l_ref * u_ref ** 2)
    if convention == "force-component":
        force = np.sum(traction * mags[:, None], axis=0)
        return scale * force[0], scale * force[1]
    if convention == "printed":
        tangents = np.stack([normals[:, 1], -normals[:, 0],
                             np.zeros(len(faces))], axis=1)
        cd = np.sum(np.einsum("fc,fc->f", traction, tangents) * mags)
        cl = np.sum(np.einsum("fc,fc->f", traction, normals) * mags)
        return scale * cd, scale * cl
    raise ValueError(f"unknown coefficient convention '{convention}'")


def peak_errors(fom_series, rom_series, times):
    """Relative errors of the peak value and of its time location."""
    fom_series = np.asarray(fom_series, float)
    rom_series = np.asarray(rom_series, float)
    times = np.asarray(times, float)
    i_f, i_r = int(np.argmax(fom_series)), int(np.argmax(rom_series))
    c_err = (fom_series[i_f] - rom_series[i_r]) / fom_series[i_f] \
        if fom_series[i_f] != 0 else 0.0
    t_err = (times[i_f] - times[i_r]) / times[i_f] if times[i_f] != 0 else 0.0
    return float(c_err), float(t_err)


@dataclass
class SeriesStats:
    maximum: float
    minimum: float
    average: float

    @classmethod
    def of(cls, series):
        arr = np.asarray([s for s in series if np.isfinite(s)], dtype=float)
        if len(arr) == 0:
            return cls(np.nan, np.nan, np.nan)
        return cls(float(arr.max()), float(arr.min()), float(arr.mean()))


@dataclass
class ErrorReport:
    """Per-field error series plus aggregates and peak statistics."""

    times: np.ndarray
    field_errors: dict                       # name -> series
    energy_errors: dict                      # name -> series
    stats: dict = field(default_factory=dict)
    peaks: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)
    projection_errors: dict = field(default_factory=dict)

    def finalize(self):
        for name, series in {**self.field_errors, **self.energy_errors}.items():
            self.stats[name] = SeriesStats.of(series)
        return self

    @property
    def speed_up(self):
        f, r = self.wall_clock.get("fom"), self.wall_clock.get("rom")
        return (f / r) if f and r else None


def error_series(fom_columns, rom_columns, weights, times):
    """Relative errors over sampling instants; instants where the reference
    norm vanishes (e.g. the rest start) are skipped as undefined."""
    out = []
    kept = []
    for k in range(fom_columns.shape[1]):
        denom = weighted_norm(fom_columns[:, k], weights)
        if denom == 0.0:
            out.append(np.nan)
            continue
        out.append(relative_l2_error(fom_columns[:, k], rom_columns[:, k],
                                     weights))
        kept.append(k)
    return np.asarray(out), np.asarray(kept, dtype=int)
