"""Energy, dissipation and production functionals and the discrete balance checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import material as mat
from .assembly import (DEFAULT_DEGREE, assemble_elasticity, assemble_load, assemble_mass,
                       assemble_stiffness, assemble_vector_load, context, integrate_density)
from .fespace import restrict_displacement, strain
from .sparse import LUFactor

ENERGY_TOL = 1e-8
MASS_TOL = 1e-11


@dataclass(frozen=True)
class EnergyBreakdown:
    interface: float
    potential: float
    elastic: float
    fluid: float

    @property
    def total(self) -> float:
        return self.interface + self.potential + self.elastic + self.fluid


@dataclass
class StepRecord:
    """Diagnostics of one completed step (or of the initial state when ``newton_iters`` is 0)."""
    t: float
    energy: EnergyBreakdown
    dissipation: float = 0.0
    production: float = 0.0
    energy_residual: float = 0.0
    mass_phi: float = 0.0
    mass_theta: float = 0.0
    mass_phi_residual: float = 0.0
    mass_theta_residual: float = 0.0
    newton_iters: int = 0
    linear_residual: float = 0.0
    newton_history: list = field(default_factory=list)

    def energy_ok(self, reference_energy) -> bool:
        return self.energy_residual <= energy_tolerance(reference_energy)

    def mass_ok(self) -> bool:
        return max(abs(self.mass_phi_residual), abs(self.mass_theta_residual)) <= MASS_TOL

    def finite(self) -> bool:
        vals = [self.t, self.energy.total, self.dissipation, self.production,
                self.energy_residual, self.mass_phi, self.mass_theta]
        return bool(np.all(np.isfinite(vals)))


def energy_tolerance(reference_energy) -> float:
    return ENERGY_TOL * (1.0 + abs(reference_energy))


def _point_fields(state, degree):
    ctx = context(state.mesh, degree)
    P = ctx.at_points(state.phi)
    eps = np.broadcast_to(strain(state.u, state.mesh)[:, None, :], P.shape + (3,))
    Th = ctx.at_points(state.theta)
    return P, eps, Th


def energy(state, params: mat.MaterialParams, degree=DEFAULT_DEGREE) -> EnergyBreakdown:
    mesh = state.mesh
    K = assemble_stiffness(mesh, 1.0, degree)
    P, eps, Th = _point_fields(state, degree)
    W, fl = mat.energy_parts(P, eps, Th, params)
    return EnergyBreakdown(
        interface=0.5 * params.gamma * float(state.phi @ (K @ state.phi)),
        potential=integrate_density(mesh, mat.psi(P), degree),
        elastic=integrate_density(mesh, W, degree),
        fluid=integrate_density(mesh, fl, degree),
    )


def total_mass(mesh, field, degree=DEFAULT_DEGREE) -> float:
    """``<field, 1>`` of a nodal P1 field."""
    return float(assemble_load(mesh, 1.0, degree) @ field)


def dissipation_operators(mesh, phi_old, params, degree=DEFAULT_DEGREE):
    """(mobility stiffness, permeability stiffness, viscous elasticity) at phi_old."""
    ctx = context(mesh, degree)
    P = ctx.at_points(phi_old)
    co = mat.coeffs_at(P, params)
    return (assemble_stiffness(mesh, params.mobility(P), degree),
            assemble_stiffness(mesh, co["kappa"], degree),
            assemble_elasticity(mesh, co["Cnu"], degree))


def dissipation_rate(mesh, phi_old, mu, du_dt, p, params: mat.MaterialParams,
                     degree=DEFAULT_DEGREE, operators=None) -> float:
    """``<m grad mu, grad mu> + <Cnu eps(du), eps(du)> + <kappa grad p, grad p>`` at phi_old.

    ``operators`` may supply the matrices of :func:`dissipation_operators`.
    """
    Km, Kk, Kn = operators or dissipation_operators(mesh, phi_old, params, degree)
    du = restrict_displacement(du_dt, mesh)
    return float(mu @ (Km @ mu) + du @ (Kn @ du) + p @ (Kk @ p))


def production_rate(mesh, r, s, f, mu, du_dt, p, degree=DEFAULT_DEGREE) -> float:
    """``<r, mu> + <f, du> + <s, p>``; r and s are per-point (or per-cell, scalar) densities."""
    du = restrict_displacement(du_dt, mesh)
    return float(assemble_load(mesh, r, degree) @ mu
                 + assemble_vector_load(mesh, f, degree) @ du
                 + assemble_load(mesh, s, degree) @ p)


def step_rates(prev, nxt, aux, tau, params, degree=DEFAULT_DEGREE, operators=None):
    """(dissipation, production) of the step prev -> nxt with sources sampled as the scheme does."""
    mesh = prev.mesh
    ctx = context(mesh, degree)
    P0 = ctx.at_points(prev.phi)
    du = (nxt.u - prev.u) / tau
    D = dissipation_rate(mesh, prev.phi, aux.mu, du, aux.p, params, degree, operators)
    Pr = production_rate(mesh, params.r(P0), params.s(P0), params.f, aux.mu, du, aux.p, degree)
    return D, Pr


def energy_inequality_residual(prev, nxt, aux, tau, params, degree=DEFAULT_DEGREE,
                               energies=None) -> float:
    """``F(next) - F(prev) + tau*D - tau*P``; non-positive up to solver error."""
    if energies is None:
        energies = energy(prev, params, degree).total, energy(nxt, params, degree).total
    D, Pr = step_rates(prev, nxt, aux, tau, params, degree)
    return energies[1] - energies[0] + tau * (D - Pr)


def relative_balance(change, expected, scale) -> float:
    """Normalised defect of ``change == expected``; a zero defect at zero scale counts as 0."""
    defect = abs(change - expected)
    if defect == 0.0:
        return 0.0
    return defect / max(scale, np.finfo(float).tiny)


# --- weighted inverse Laplacian ------------------------------------------------

class MeanFreeError(ValueError):
    pass


def _bordered_operator(mesh, phi_old, params, degree):
    ctx = context(mesh, degree)
    m = params.mobility(ctx.at_points(phi_old))
    K = assemble_stiffness(mesh, m, degree)
    M = assemble_mass(mesh, 1.0, degree)
    ones = M @ np.ones(mesh.n_vertices)
    A = sp.bmat([[K, ones[:, None]], [ones[None, :], None]], format="csc")
    return A, M, K


def weighted_inverse_laplacian(mesh, v, phi_old, params, degree=DEFAULT_DEGREE,
                               mean_tol=1e-10) -> np.ndarray:
    """z with ``<m grad z, grad w> = <v, w>`` for all w and ``<z, 1> = 0``."""
    v = np.asarray(v, dtype=np.float64)
    A, M, _ = _bordered_operator(mesh, phi_old, params, degree)
    Mv = M @ v
    mean = Mv.sum()
    if abs(mean) > mean_tol * max(np.sqrt(v @ Mv), np.finfo(float).tiny):
        raise MeanFreeError(f"input is not mean-free: <v,1> = {mean:.3e}")
    if not np.any(v):
        return np.zeros_like(v)
    rhs = np.append(Mv, 0.0)
    return LUFactor(A).solve(rhs)[:-1]


def h_minus1_m_norm(mesh, v, phi_old, params, degree=DEFAULT_DEGREE) -> float:
    """``sqrt(<m grad z, grad z>)`` with z the weighted inverse Laplacian of v."""
    z = weighted_inverse_laplacian(mesh, v, phi_old, params, degree)
    M = assemble_mass(mesh, 1.0, degree)
    return float(np.sqrt(max(z @ (M @ np.asarray(v, dtype=np.float64)), 0.0)))
