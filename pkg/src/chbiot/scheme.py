"""Time integration of the Cahn-Hilliard-Biot system.

The production integrator splits each step into a linear poro-elastic solve
with all coefficients frozen at the old phase field, followed by a Newton
solve for the phase field and chemical potential. :func:`solve_monolithic`
solves the same discrete equations as one five-field Newton system and
serves as an oracle on small meshes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import diagnostics as diag
from . import kernels
from . import material as mat
from .assembly import (DEFAULT_DEGREE, assemble_div_coupling, assemble_divdiv,
                       assemble_elasticity, assemble_load, assemble_mass, assemble_stiffness,
                       assemble_strain_coupling, assemble_strain_load, assemble_vector_load,
                       context)
from .fespace import extend_displacement, restrict_displacement, strain
from .mesh import SimplicialMesh
from .quadrature import gauss_legendre_unit
from .sparse import (BlockSystem, LUFactor, ReusableLU, SolverError, assemble_block_matrix,
                     solve_spd)

log = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


class StateError(ValueError):
    pass


@dataclass
class State:
    mesh: SimplicialMesh
    t: float
    phi: np.ndarray
    u: np.ndarray  # (nv, 2), zero on the boundary
    theta: np.ndarray

    def __post_init__(self):
        nv = self.mesh.n_vertices
        self.phi = np.asarray(self.phi, dtype=np.float64).reshape(nv)
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(nv)
        self.u = np.asarray(self.u, dtype=np.float64).reshape(nv, 2)

    def validate(self):
        for name in ("phi", "u", "theta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise StateError(f"{name} has non-finite values at t={self.t}")
        if np.any(self.u[self.mesh.boundary_vertex_mask] != 0.0):
            raise StateError("displacement does not vanish on the boundary")
        return self

    def copy(self):
        return State(self.mesh, self.t, self.phi.copy(), self.u.copy(), self.theta.copy())


@dataclass
class StepAux:
    mu: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class SchemeConfig:
    tau: float
    T: float
    newton_tol: float = 1e-10
    newton_max_iters: int = 50
    quad_points: int = 5
    degree: int = DEFAULT_DEGREE
    chl_mode: bool = False
    linear_solver: str = "lu"
    monolithic_dof_cap: int = 2000
    max_halvings: int = 8

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"step size must be positive, got {self.tau}")
        if not self.T >= 0:
            raise ValueError(f"final time must be non-negative, got {self.T}")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        n = self.T / self.tau
        if abs(n - round(n)) > 1e-8 * max(n, 1.0):
            raise ValueError(f"T/tau = {n} is not an integer")
        if self.linear_solver not in ("lu",):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))


def effective_params(params: mat.MaterialParams, config: SchemeConfig) -> mat.MaterialParams:
    return params.chl() if config.chl_mode else params


class _Frozen:
    """Operators of one step that depend only on the old state."""

    def __init__(self, state: State, params: mat.MaterialParams, config: SchemeConfig):
        mesh, deg = state.mesh, config.degree
        self.mesh, self.params, self.config = mesh, params, config
        self.ctx = ctx = context(mesh, deg)
        self.P0 = ctx.at_points(state.phi)
        self.co = mat.coeffs_at(self.P0, params)
        self.mass = assemble_mass(mesh, 1.0, deg)
        self.lap = assemble_stiffness(mesh, 1.0, deg)
        self.mobility = assemble_stiffness(mesh, params.mobility(self.P0), deg)
        self.r_load = assemble_load(mesh, params.r(self.P0), deg)
        self.s_load = assemble_load(mesh, params.s(self.P0), deg)
        self.packed = kernels.pack_material(params)
        self.s_nodes, self.s_weights = gauss_legendre_unit(config.quad_points)
        self._poro = None

    # -- poro-elastic block ----------------------------------------------------
    def poro_system(self, state: State) -> BlockSystem:
        mesh, deg, tau, co = self.mesh, self.config.degree, self.config.tau, self.co
        Mf, al = co["M"], co["alpha"]
        if self._poro is None:
            Kn = assemble_elasticity(mesh, co["Cnu"], deg)
            Kc = assemble_elasticity(mesh, co["C"], deg)
            Kdd = assemble_divdiv(mesh, Mf * al * al, deg)
            D = assemble_div_coupling(mesh, Mf * al, deg)
            MM = assemble_mass(mesh, Mf, deg)
            Kk = assemble_stiffness(mesh, co["kappa"], deg)
            t = self.params.eigenstrain(self.P0)
            CI = co["C"] @ mat.VOIGT_I
            eig = assemble_strain_load(mesh, 2.0 * t[..., None] * CI, deg)
            f = assemble_vector_load(mesh, self.params.f, deg)
            self._poro = dict(Kn=Kn, Kc=Kc, Kdd=Kdd, D=D, MM=MM, Kk=Kk, eig=eig, f=f)
        o = self._poro
        nv, nu = mesh.n_vertices, o["Kn"].shape[0]
        U0 = restrict_displacement(state.u, mesh)
        blocks = {
            ("u", "u"): o["Kn"] + tau * (2.0 * o["Kc"] + o["Kdd"]),
            ("u", "theta"): -tau * o["D"].T,
            ("u", "p"): None,
            ("theta", "u"): None,
            ("theta", "theta"): self.mass,
            ("theta", "p"): tau * o["Kk"],
            ("p", "u"): o["D"],
            ("p", "theta"): -o["MM"],
            ("p", "p"): self.mass,
        }
        rhs = {
            "u": o["Kn"] @ U0 + tau * (o["f"] + o["eig"]),
            "theta": self.mass @ state.theta + tau * self.s_load,
            "p": np.zeros(nv),
        }
        return BlockSystem([("u", nu), ("theta", nv), ("p", nv)], blocks, rhs)

    # -- Cahn-Hilliard block -----------------------------------------------------
    def ch_pointwise(self, phi1, eps, theta_pts):
        """Nodal-load integrand terms of the mu equation and their phi1-derivative at points."""
        P1 = self.ctx.at_points(phi1)
        shape = P1.shape
        e = np.broadcast_to(eps, shape + (3,)) if eps.ndim == 3 else \
            np.broadcast_to(eps[:, None, :], shape + (3,))
        wav, dwav = kernels.wphi_average(self.P0, P1, e, theta_pts, self.packed,
                                         self.s_nodes, self.s_weights)
        val = P1 * P1 * P1 - self.P0 + wav.reshape(shape)
        der = 3.0 * P1 ** 2 + dwav.reshape(shape)
        return val, der

    def ch_residual(self, phi0, phi1, mu, eps, theta_pts):
        tau, gamma = self.config.tau, self.params.gamma
        val, der = self.ch_pointwise(phi1, eps, theta_pts)
        load = assemble_load(self.mesh, val, self.config.degree)
        F1 = self.mass @ (phi1 - phi0) + tau * (self.mobility @ mu) - tau * self.r_load
        F2 = self.mass @ mu - gamma * (self.lap @ phi1) - load
        return F1, F2, der

    def ch_jacobian(self, der):
        tau, gamma = self.config.tau, self.params.gamma
        Mg = assemble_mass(self.mesh, der, self.config.degree)
        return sp.bmat([[self.mass, tau * self.mobility],
                        [-gamma * self.lap - Mg, self.mass]], format="csc")

    def initial_mu(self, phi0, eps, theta_pts):
        """Algebraic chemical potential at phi1 = phi0."""
        val, _ = self.ch_pointwise(phi0, eps, theta_pts)
        rhs = self.params.gamma * (self.lap @ phi0) + assemble_load(self.mesh, val,
                                                                     self.config.degree)
        return solve_spd(self.mass, rhs, tol=1e-14)


def _newton(residual, jacobian, x0, config: SchemeConfig, label, linear=None):
    """Newton iteration with step halving on residual increase.

    ``linear(J, rhs)`` solves the Newton system; defaults to a fresh LU.
    """
    linear = linear or (lambda J, rhs: LUFactor(J).solve(rhs))
    x = x0.copy()
    F, extra = residual(x)
    norm = float(np.linalg.norm(F))
    history = [norm]
    it = 0
    while norm > config.newton_tol:
        if not math.isfinite(norm):
            raise NewtonError(f"{label}: non-finite residual", history)
        if it >= config.newton_max_iters:
            raise NewtonError(f"{label}: no convergence in {it} iterations "
                              f"(residual {norm:.3e})", history)
        try:
            dx = linear(jacobian(x, extra), -F)
        except SolverError as exc:
            raise NewtonError(f"{label}: Jacobian solve failed: {exc}", history) from exc
        lam = 1.0
        for _ in range(config.max_halvings + 1):
            xt = x + lam * dx
            Ft, et = residual(xt)
            nt = float(np.linalg.norm(Ft))
            if nt <= norm:
                break
            lam *= 0.5
        else:
            raise NewtonError(f"{label}: residual increased after {config.max_halvings} "
                              f"halvings (residual {norm:.3e})", history)
        x, F, extra, norm = xt, Ft, et, nt
        history.append(norm)
        it += 1
    return x, it, history


class Workspace:
    """Solver state carried across steps (factorisation reuse)."""

    def __init__(self):
        self.poro = ReusableLU()
        self.ch = ReusableLU()


def poroelastic_step(state: State, params: mat.MaterialParams, config: SchemeConfig,
                     frozen: _Frozen | None = None, workspace: Workspace | None = None):
    """Linear solve for (u, theta, p) at the new time; returns nodal fields and the residual."""
    params = effective_params(params, config)
    fr = frozen or _Frozen(state, params, config)
    system = fr.poro_system(state)
    A = assemble_block_matrix(system)
    b = system.rhs_vector()
    x = (workspace or Workspace()).poro.solve(A, b)
    res = float(np.abs(A @ x - b).max(initial=0.0) / max(np.abs(b).max(initial=0.0), 1.0))
    parts = system.split(x)
    return extend_displacement(parts["u"], state.mesh), parts["theta"].copy(), \
        parts["p"].copy(), res


def cahn_hilliard_step(state: State, u_new, theta_new, params: mat.MaterialParams,
                       config: SchemeConfig, mu_guess=None, frozen: _Frozen | None = None,
                       workspace: Workspace | None = None):
    """Newton solve for (phi, mu); returns (phi_new, mu_new, iterations, residual history)."""
    params = effective_params(params, config)
    fr = frozen or _Frozen(state, params, config)
    mesh = state.mesh
    nv = mesh.n_vertices
    eps = strain(u_new, mesh)
    th = fr.ctx.at_points(theta_new)
    phi0 = state.phi
    mu0 = fr.initial_mu(phi0, eps, th) if mu_guess is None else np.asarray(mu_guess, float)

    def residual(x):
        F1, F2, der = fr.ch_residual(phi0, x[:nv], x[nv:], eps, th)
        return np.concatenate([F1, F2]), der

    x, it, hist = _newton(residual, lambda x, der: fr.ch_jacobian(der),
                          np.concatenate([phi0, mu0]), config, "Cahn-Hilliard step",
                          linear=(workspace or Workspace()).ch.solve)
    return x[:nv], x[nv:], it, hist


def step(state: State, params: mat.MaterialParams, config: SchemeConfig, mu_guess=None,
         workspace: Workspace | None = None, prev_energy=None):
    """One step of the decoupled scheme; returns (new state, aux, record)."""
    p_eff = effective_params(params, config)
    fr = _Frozen(state, p_eff, config)
    u1, th1, p1, lin_res = poroelastic_step(state, p_eff, replace(config, chl_mode=False), fr,
                                            workspace)
    phi1, mu1, it, hist = cahn_hilliard_step(state, u1, th1, p_eff,
                                             replace(config, chl_mode=False), mu_guess, fr,
                                             workspace)
    new = State(state.mesh, state.t + config.tau, phi1, u1, th1)
    aux = StepAux(mu1, p1)
    ops = (fr.mobility, fr._poro["Kk"], fr._poro["Kn"])
    rec = make_record(state, new, aux, p_eff, config, it, hist, lin_res,
                      prev_energy=prev_energy, operators=ops)
    return new, aux, rec


def make_record(prev: State, new: State, aux: StepAux, params, config, iters=0,
                history=(), lin_res=0.0, prev_energy=None, operators=None) -> diag.StepRecord:
    deg, tau = config.degree, config.tau
    E0 = prev_energy if prev_energy is not None else diag.energy(prev, params, deg)
    E1 = diag.energy(new, params, deg)
    D, Pr = diag.step_rates(prev, new, aux, tau, params, deg, operators)
    mesh = prev.mesh
    ones = assemble_load(mesh, 1.0, deg)
    ctx = context(mesh, deg)
    P0 = ctx.at_points(prev.phi)
    r_int = float(params.r(P0).ravel() @ ctx.wdet.ravel())
    s_int = float(params.s(P0).ravel() @ ctx.wdet.ravel())
    m_phi0, m_phi1 = float(ones @ prev.phi), float(ones @ new.phi)
    m_th0, m_th1 = float(ones @ prev.theta), float(ones @ new.theta)
    scale_phi = max(float(ones @ np.abs(prev.phi)), float(ones @ np.abs(new.phi)))
    scale_th = max(float(ones @ np.abs(prev.theta)), float(ones @ np.abs(new.theta)))
    return diag.StepRecord(
        t=new.t, energy=E1, dissipation=D, production=Pr,
        energy_residual=E1.total - E0.total + tau * (D - Pr),
        mass_phi=m_phi1, mass_theta=m_th1,
        mass_phi_residual=diag.relative_balance(m_phi1 - m_phi0, tau * r_int, scale_phi),
        mass_theta_residual=diag.relative_balance(m_th1 - m_th0, tau * s_int, scale_th),
        newton_iters=iters, linear_residual=lin_res, newton_history=list(history))


def initial_record(state: State, params, config) -> diag.StepRecord:
    params = effective_params(params, config)
    ones = assemble_load(state.mesh, 1.0, config.degree)
    return diag.StepRecord(t=state.t, energy=diag.energy(state, params, config.degree),
                           mass_phi=float(ones @ state.phi),
                           mass_theta=float(ones @ state.theta))


def solve_monolithic(state: State, params: mat.MaterialParams, config: SchemeConfig,
                     mu_guess=None):
    """Five-field Newton solve of the fully coupled step; oracle for :func:`step`."""
    params = effective_params(params, config)
    mesh = state.mesh
    nv = mesh.n_vertices
    fr = _Frozen(state, params, replace(config, chl_mode=False))
    system = fr.poro_system(state)
    nu = system.sizes["u"]
    n_total = 4 * nv + nu
    if n_total > config.monolithic_dof_cap:
        raise ValueError(f"monolithic oracle refused: {n_total} unknowns exceed the cap "
                         f"of {config.monolithic_dof_cap}")
    A = assemble_block_matrix(system)
    b = system.rhs_vector()
    deg = config.degree
    ctx = fr.ctx
    sl = {"phi": slice(0, nv), "mu": slice(nv, 2 * nv), "u": slice(2 * nv, 2 * nv + nu)}
    sl["poro"] = slice(2 * nv, n_total)

    def fields(x):
        U = extend_displacement(x[sl["u"]], mesh)
        th = x[2 * nv + nu:3 * nv + nu]
        return x[sl["phi"]], x[sl["mu"]], strain(U, mesh), th

    def residual(x):
        phi1, mu, eps, th = fields(x)
        th_pts = ctx.at_points(th)
        F1, F2, der = fr.ch_residual(state.phi, phi1, mu, eps, th_pts)
        F3 = A @ x[sl["poro"]] - b
        return np.concatenate([F1, F2, F3]), (phi1, eps, th_pts, der)

    def jacobian(x, extra):
        phi1, eps, th_pts, der = extra
        P1 = ctx.at_points(phi1)
        e = np.broadcast_to(eps[:, None, :], P1.shape + (3,))
        _, _, d_eps, d_th = mat.time_avg_wtilde_phi(fr.P0, P1, e, th_pts, params,
                                                    config.quad_points, derivatives=True)
        J_ch = fr.ch_jacobian(der)
        G_u = -assemble_strain_coupling(mesh, d_eps, deg)
        G_th = -assemble_mass(mesh, d_th, deg)
        def Z(r, c):
            return sp.csr_matrix((r, c))
        top = sp.bmat([[J_ch[:nv, :], Z(nv, nu), Z(nv, nv), Z(nv, nv)],
                       [J_ch[nv:, :], G_u, G_th, Z(nv, nv)]])
        zero = sp.csr_matrix((A.shape[0], 2 * nv))
        bottom = sp.hstack([zero, A])
        return sp.vstack([top, bottom], format="csc")

    phi0 = state.phi
    x0 = np.concatenate([phi0, np.zeros(nv), restrict_displacement(state.u, mesh),
                         state.theta, np.zeros(nv)])
    if mu_guess is None:
        th0 = ctx.at_points(state.theta)
        mu_guess = fr.initial_mu(phi0, strain(state.u, mesh), th0)
    x0[sl["mu"]] = mu_guess
    x, it, hist = _newton(residual, jacobian, x0, config, "monolithic step")
    phi1, mu1, _, th1 = fields(x)
    U1 = extend_displacement(x[sl["u"]], mesh)
    new = State(mesh, state.t + config.tau, phi1.copy(), U1, th1.copy())
    return new, StepAux(mu1.copy(), x[3 * nv + nu:].copy())


# --- time loop -----------------------------------------------------------------------

class RunError(RuntimeError):
    def __init__(self, message, summary):
        super().__init__(message)
        self.summary = summary


@dataclass
class RunSummary:
    final: State
    aux: StepAux | None
    records: list = field(default_factory=list)
    steps: int = 0
    mass_phi_cumulative: float = 0.0
    mass_theta_cumulative: float = 0.0
    worst_energy_residual: float = -math.inf  # normalised by 1 + |F^n|
    uniqueness_ratio: float = math.nan
    energy_monotone: bool = True

    @property
    def structure_preserved(self) -> bool:
        return (self.worst_energy_residual <= diag.ENERGY_TOL
                and max(self.mass_phi_cumulative, self.mass_theta_cumulative) <= diag.MASS_TOL
                and all(r.mass_ok() for r in self.records[1:]))


class Trajectory:
    """Lazy time loop; iterating yields ``(state, aux, record)`` starting with the initial state.

    ``summary`` is updated as the iteration proceeds, so it stays valid when a
    step fails part-way.
    """

    def __init__(self, initial: State, params: mat.MaterialParams, config: SchemeConfig,
                 n_steps: int | None = None):
        initial.validate()
        self.initial, self.params, self.config = initial, params, config
        self.p_eff = effective_params(params, config)
        self.n_steps = config.n_steps if n_steps is None else n_steps
        for w in self.p_eff.warnings(config.chl_mode):
            log.warning("assumption not met: %s", w)
        mesh = initial.mesh
        ratio = mesh.h_max ** (2 * 2) / config.tau
        log.info("uniqueness ratio h^4/tau = %.3e (informational)", ratio)
        self.summary = RunSummary(final=initial, aux=None,
                                  records=[initial_record(initial, params, config)],
                                  uniqueness_ratio=ratio)

    def __iter__(self):
        initial, config, p_eff, summary = self.initial, self.config, self.p_eff, self.summary
        mesh = initial.mesh
        deg, tau = config.degree, config.tau
        ones = assemble_load(mesh, 1.0, deg)
        ctx = context(mesh, deg)
        rec0 = summary.records[0]
        yield initial, None, rec0
        src_phi = src_th = 0.0
        scale_phi = float(ones @ np.abs(initial.phi))
        scale_th = float(ones @ np.abs(initial.theta))
        state, mu, ws = initial, None, Workspace()
        for k in range(self.n_steps):
            P0 = ctx.at_points(state.phi)
            src_phi += tau * float(p_eff.r(P0).ravel() @ ctx.wdet.ravel())
            src_th += tau * float(p_eff.s(P0).ravel() @ ctx.wdet.ravel())
            F_old = summary.records[-1].energy.total
            try:
                new, aux, rec = step(state, self.params, config, mu_guess=mu, workspace=ws,
                                     prev_energy=summary.records[-1].energy)
                new.validate()
            except Exception as exc:
                raise RunError(f"step {k + 1} at t={state.t:.6g} failed: {exc}",
                               summary) from exc
            new.t = rec.t = initial.t + (k + 1) * tau
            summary.records.append(rec)
            summary.worst_energy_residual = max(summary.worst_energy_residual,
                                                rec.energy_residual / (1.0 + abs(F_old)))
            if rec.energy.total > F_old + diag.energy_tolerance(F_old):
                summary.energy_monotone = False
            scale_phi = max(scale_phi, float(ones @ np.abs(new.phi)))
            scale_th = max(scale_th, float(ones @ np.abs(new.theta)))
            summary.mass_phi_cumulative = diag.relative_balance(
                rec.mass_phi - rec0.mass_phi, src_phi, scale_phi)
            summary.mass_theta_cumulative = diag.relative_balance(
                rec.mass_theta - rec0.mass_theta, src_th, scale_th)
            state, mu = new, aux.mu
            summary.final, summary.aux, summary.steps = new, aux, k + 1
            yield new, aux, rec


def run(initial: State, params: mat.MaterialParams, config: SchemeConfig, sinks=(),
        n_steps: int | None = None) -> RunSummary:
    """Iterate :func:`step` up to ``T``; each sink is called as ``sink(state, aux, record)``."""
    traj = Trajectory(initial, params, config, n_steps)
    for state, aux, rec in traj:
        for sink in sinks:
            sink(state, aux, rec)
    return traj.summary
