"""Time integration of the reduced evolve/filter system.

Each step solves two small dense saddle systems monolithically: the
momentum/pressure-Poisson pair for the evolve coefficients, then the
filter/filter-pressure pair. The pressure equations replace the projected
continuity constraints, with curl and normal-flux boundary terms assembled
offline. Known inflow amplitudes enter through the lifting blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rom_offline import ReducedOperators

_BDF = {
    1: {"c0": 1.0, "hist": (1.0,), "extrap": (1.0,)},
    2: {"c0": 1.5, "hist": (2.0, -0.5), "extrap": (2.0, -1.0)},
}


class ReducedSolveError(RuntimeError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


@dataclass
class ReducedState:
    vel_coeffs: np.ndarray
    pres_coeffs: np.ndarray
    filt_vel_coeffs: np.ndarray
    filt_pres_coeffs: np.ndarray
    filt_vel_hist: list          # [n, n-1]
    amp_hist: list               # inflow amplitudes [n, n-1]
    time: float = 0.0
    step_index: int = 0

    @property
    def bdf_order(self):
        return 1 if len(self.filt_vel_hist) < 2 else 2


def initial_reduced_state(ops: ReducedOperators, vel_coeffs=None,
                          filt_vel_coeffs=None, amplitude0=0.0,
                          t0=0.0) -> ReducedState:
    nv, nu, nq, nqb = ops.ranks
    b = np.zeros(nv) if vel_coeffs is None else np.asarray(vel_coeffs, float)
    bb = (np.zeros(nu) if filt_vel_coeffs is None
          else np.asarray(filt_vel_coeffs, float))
    return ReducedState(b, np.zeros(nq), bb.copy(), np.zeros(nqb),
                        [bb.copy()], [float(amplitude0)], t0, 0)


def _solve_dense(K, rhs, what):
    try:
        x = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as err:
        raise ReducedSolveError(
            f"singular reduced {what} system (cond ~ {np.linalg.cond(K):.2e})",
            condition=float(np.linalg.cond(K))) from err
    resid = np.linalg.norm(K @ x - rhs)
    scale = np.linalg.norm(rhs) + np.linalg.norm(K) * np.linalg.norm(x) + 1e-300
    if resid > 1e-12 * scale:
        raise ReducedSolveError(
            f"reduced {what} solve residual {resid / scale:.2e} exceeds 1e-12 "
            f"(cond ~ {np.linalg.cond(K):.2e})",
            condition=float(np.linalg.cond(K)))
    return x


def convection_matrix(tensor, convecting) -> np.ndarray:
    """Contract the third tensor index with the convecting coefficients."""
    return np.einsum("ijk,k->ij", tensor, convecting)


def reduced_evolve_step(ops: ReducedOperators, state: ReducedState, rho, mu,
                        dt, amp_new, bdf_order=None, ppe_form="consistent"):
    """Coupled solve for the new evolve velocity/pressure coefficients."""
    order = bdf_order or state.bdf_order
    sch = _BDF[order]
    nv, nu, nq, _ = ops.ranks
    hist_b = state.filt_vel_hist
    hist_a = state.amp_hist
    conv_b = sum(w * b for w, b in zip(sch["extrap"], hist_b))
    conv_a = sum(w * a for w, a in zip(sch["extrap"], hist_a))
    c0_dt = sch["c0"] / dt

    Kvv = (rho * c0_dt * ops.mass
           + rho * convection_matrix(ops.conv_tensor, conv_b)
           + rho * conv_a * ops.lift_conv_by_lift
           - 2.0 * mu * ops.laplacian)
    rhs_v = (rho / dt) * ops.cross_mass @ sum(
        w * b for w, b in zip(sch["hist"], hist_b))
    rhs_v += (rho / dt) * sum(w * a for w, a in zip(sch["hist"], hist_a)) \
        * ops.lift_mass
    rhs_v -= rho * c0_dt * amp_new * ops.lift_mass
    rhs_v += 2.0 * mu * amp_new * ops.lift_laplacian
    rhs_v -= rho * (amp_new * ops.lift_transported @ conv_b
                    + conv_a * amp_new * ops.lift_lift)

    Kqv = (rho * convection_matrix(ops.ppe_conv_tensor, conv_b)
           + rho * conv_a * ops.lift_ppe_conv_by_lift
           - 2.0 * mu * ops.ppe_curl)
    rhs_q = -rho * (amp_new * ops.lift_ppe_transported @ conv_b
                    + conv_a * amp_new * ops.lift_ppe_lift)
    rhs_q += 2.0 * mu * amp_new * ops.lift_ppe_curl
    if ppe_form == "consistent":
        # boundary time term at each history level with its own BDF weight
        Kqv = Kqv + rho * c0_dt * ops.ppe_flux_v
        rhs_q -= rho * c0_dt * amp_new * ops.lift_ppe_flux
        for w, b, a in zip(sch["hist"], hist_b, hist_a):
            rhs_q += (rho / dt) * w * (ops.ppe_flux_u @ b
                                       + a * ops.lift_ppe_flux)
    elif ppe_form == "literal":
        # printed combination applied at the current level
        Kqv = Kqv - rho / (2.0 * dt) * 3.0 * (ops.ppe_flux_v - ops.ppe_flux_u)
    else:
        raise ValueError(f"unknown ppe_form '{ppe_form}'")

    K = np.block([[Kvv, ops.grad_coupling],
                  [Kqv, ops.ppe_laplacian]])
    rhs = np.concatenate([rhs_v, rhs_q])
    x = _solve_dense(K, rhs, "evolve")
    return x[:nv], x[nv:]


def reduced_filter_step(ops: ReducedOperators, vel_coeffs, rho, mu_bar, dt,
                        amp_new, ppe_form="consistent"):
    """Coupled solve for the filtered velocity/pressure coefficients.

    The curl boundary factor follows the filter's viscous term (mu_bar) in
    the consistent form; the literal form keeps the printed doubled factor.
    """
    nv, nu, nq, nqb = ops.ranks
    curl_factor = mu_bar if ppe_form == "consistent" else 2.0 * mu_bar
    Kuu = rho / dt * ops.filt_mass - mu_bar * ops.filt_laplacian
    rhs_u = rho / dt * ops.cross_mass.T @ np.asarray(vel_coeffs, float)
    rhs_u += mu_bar * amp_new * ops.lift_filt_laplacian
    Kqu = -curl_factor * ops.ppe_filt_curl
    rhs_q = curl_factor * amp_new * ops.lift_ppe_filt_curl
    K = np.block([[Kuu, ops.filt_grad_coupling],
                  [Kqu, ops.ppe_filt_laplacian]])
    rhs = np.concatenate([rhs_u, rhs_q])
    x = _solve_dense(K, rhs, "filter")
    return x[:nu], x[nu:]


def divergence_indicator(ops: ReducedOperators, vel_coeffs) -> float:
    """Norm of the projected divergence, a cheap consistency diagnostic."""
    return float(np.linalg.norm(ops.div_coupling @ np.asarray(vel_coeffs)))


@dataclass
class ReducedTrajectory:
    times: np.ndarray
    vel: np.ndarray          # (n_steps+1, nv)
    pres: np.ndarray
    filt_vel: np.ndarray
    filt_pres: np.ndarray
    divergence_indicator: np.ndarray

    def row(self, k):
        return (self.vel[k], self.pres[k], self.filt_vel[k],
                self.filt_pres[k])


def run_rom(ops: ReducedOperators, rho, mu, filter_radius, dt, n_steps,
            amplitude, t0=0.0, initial: ReducedState | None = None,
            ppe_form="consistent") -> ReducedTrajectory:
    """Integrate the reduced system; `amplitude` maps time to inflow scale.

    The first step uses the first-order scheme, later steps second order,
    mirroring the full-order integrator.
    """
    mu_bar = rho * filter_radius ** 2 / dt
    state = initial or initial_reduced_state(ops, amplitude0=amplitude(t0),
                                             t0=t0)
    nv, nu, nq, nqb = ops.ranks
    times = t0 + dt * np.arange(n_steps + 1)
    traj = ReducedTrajectory(
        times,
        np.zeros((n_steps + 1, nv)), np.zeros((n_steps + 1, nq)),
        np.zeros((n_steps + 1, nu)), np.zeros((n_steps + 1, nqb)),
        np.zeros(n_steps + 1))
    traj.vel[0] = state.vel_coeffs
    traj.pres[0] = state.pres_coeffs
    traj.filt_vel[0] = state.filt_vel_coeffs
    traj.filt_pres[0] = state.filt_pres_coeffs
    traj.divergence_indicator[0] = divergence_indicator(ops, state.vel_coeffs)

    for k in range(n_steps):
        t_new = t0 + (k + 1) * dt
        a_new = amplitude(t_new)
        beta, gamma = reduced_evolve_step(ops, state, rho, mu, dt, a_new,
                                          ppe_form=ppe_form)
        beta_bar, gamma_bar = reduced_filter_step(ops, beta, rho, mu_bar, dt,
                                                  a_new, ppe_form=ppe_form)
        state = ReducedState(
            beta, gamma, beta_bar, gamma_bar,
            [beta_bar] + state.filt_vel_hist[:1],
            [a_new] + state.amp_hist[:1],
            t_new, state.step_index + 1)
        traj.vel[k + 1] = beta
        traj.pres[k + 1] = gamma
        traj.filt_vel[k + 1] = beta_bar
        traj.filt_pres[k + 1] = gamma_bar
        traj.divergence_indicator[k + 1] = divergence_indicator(ops, beta)
    return traj
