"""Constitutive functions of the Cahn-Hilliard-Biot model.

All pointwise functions are vectorised: ``phi`` and ``theta`` have shape ``S``,
strains ``eps`` have shape ``S + (3,)`` in Voigt form (eps11, eps22, 2*eps12).
The elastic density is ``W = (eps - T(phi)) . C(phi) (eps - T(phi))`` without
a factor 1/2, and the reduced density adds ``M(phi)/2 (theta - alpha(phi) tr eps)^2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .quadrature import gauss_legendre_unit

log = logging.getLogger(__name__)

VOIGT_I = np.array([1.0, 1.0, 0.0])

C_TABLE_MINUS = ((4.0, 2.0, 0.0), (2.0, 4.0, 0.0), (0.0, 0.0, 8.0))
C_TABLE_PLUS = ((1.0, 0.5, 0.0), (0.5, 1.0, 0.0), (0.0, 0.0, 2.0))
CNU_TABLE = ((1.0, 0.5, 0.0), (0.5, 1.0, 0.0), (0.0, 0.0, 2.0))


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class SourceSpec:
    """Phase-dependent source: ``zero``, ``constant`` (=value) or ``logistic`` (=value*(1-phi^2))."""
    kind: str = "zero"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "logistic"):
            raise ParameterError(f"unknown source kind {self.kind!r}")

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(phi)
        if self.kind == "constant":
            return np.full_like(phi, self.value)
        return self.value * (1.0 - phi * phi)


@dataclass(frozen=True)
class MobilitySpec:
    """``constant``: m = value; ``degenerate``: m = floor + scale*(phi^2 - 1)^2."""
    kind: str = "constant"
    value: float = 1.0
    floor: float = 1e-14
    scale: float = 1.0 / 16.0

    def __post_init__(self):
        if self.kind not in ("constant", "degenerate"):
            raise ParameterError(f"unknown mobility kind {self.kind!r}")

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        if self.kind == "constant":
            return np.full_like(phi, self.value)
        return self.floor + self.scale * (phi * phi - 1.0) ** 2


def _sym3(name, m):
    a = np.array(m, dtype=np.float64)
    if a.shape != (3, 3):
        raise ParameterError(f"{name} must be a 3x3 Voigt matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0, atol=1e-14):
        raise ParameterError(f"{name} must be symmetric")
    return a


@dataclass(frozen=True)
class MaterialParams:
    """Phase-dependent material data; defaults reproduce the reference parameter table.

    The eigenstrain is ``T(phi) = eigen_scale * xi * (phi - eigen_shift) * I``.
    """
    gamma: float = 1e-4
    xi: float = 0.3
    eigen_scale: float = 1.0
    eigen_shift: float = 0.0
    kappa: tuple = (1.0, 0.1)
    M: tuple = (1.0, 0.1)
    alpha: tuple = (1.0, 0.5)
    C_minus: tuple = C_TABLE_MINUS
    C_plus: tuple = C_TABLE_PLUS
    Cnu_minus: tuple = CNU_TABLE
    Cnu_plus: tuple = CNU_TABLE
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    r: SourceSpec = field(default_factory=SourceSpec)
    s: SourceSpec = field(default_factory=SourceSpec)
    f: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError("interface parameter gamma must be positive")
        for name in ("kappa", "M", "alpha"):
            pair = getattr(self, name)
            if len(pair) != 2:
                raise ParameterError(f"{name} needs two endpoint values")
            if min(pair) < 0:
                raise ParameterError(f"{name} endpoints must be non-negative, got {pair}")
        if len(self.f) != 2:
            raise ParameterError("body force f must have two components")
        for name in ("C_minus", "C_plus"):
            a = _sym3(name, getattr(self, name))
            if np.linalg.eigvalsh(a).min() <= 0:
                raise ParameterError(f"{name} must be positive definite")
        for name in ("Cnu_minus", "Cnu_plus"):
            a = _sym3(name, getattr(self, name))
            lam = np.linalg.eigvalsh(a).min()
            if lam < -1e-14:
                raise ParameterError(f"{name} must be positive semidefinite")

    def warnings(self, chl_mode=False):
        """Assumption breaches that are tolerated but void the a-priori guarantees."""
        out = []
        for name in ("Cnu_minus", "Cnu_plus"):
            if np.linalg.eigvalsh(np.array(getattr(self, name))).min() <= 0:
                out.append(f"{name} is not positive definite (viscous regularisation absent)")
        if self.mobility.kind == "degenerate":
            out.append("degenerate mobility: lower bound only "
                       f"{self.mobility.floor:g} in the pure phases")
        if min(self.kappa) == 0:
            out.append("permeability vanishes at an endpoint")
        if min(self.alpha) == 0:
            out.append("Biot-Willis coefficient vanishes at an endpoint")
        if min(self.M) == 0 and not chl_mode:
            out.append("compressibility vanishes at an endpoint outside CHL mode")
        return out

    def chl(self) -> "MaterialParams":
        """The Cahn-Hilliard-Larche reduction (compressibility M = 0)."""
        return replace(self, M=(0.0, 0.0))

    # constant arrays used by the vectorised formulas
    @property
    def Cm(self):
        return np.array(self.C_minus, dtype=np.float64)

    @property
    def dC(self):
        return np.array(self.C_plus, dtype=np.float64) - self.Cm

    @property
    def Cnum(self):
        return np.array(self.Cnu_minus, dtype=np.float64)

    @property
    def dCnu(self):
        return np.array(self.Cnu_plus, dtype=np.float64) - self.Cnum

    @property
    def eigen_slope(self) -> float:
        return self.eigen_scale * self.xi

    def eigenstrain(self, phi):
        """Scalar multiple t(phi) of the identity."""
        return self.eigen_slope * (np.asarray(phi, dtype=np.float64) - self.eigen_shift)


# --- interpolation ----------------------------------------------------------

def pi_interp(phi):
    phi = np.asarray(phi, dtype=np.float64)
    c = np.clip(phi, -1.0, 1.0)
    return 0.25 * (2.0 + 3.0 * c - c * c * c)


def dpi_interp(phi):
    phi = np.asarray(phi, dtype=np.float64)
    return np.where(np.abs(phi) <= 1.0, 0.75 * (1.0 - phi * phi), 0.0)


def d2pi_interp(phi):
    phi = np.asarray(phi, dtype=np.float64)
    return np.where(np.abs(phi) <= 1.0, -1.5 * phi, 0.0)


def _affine(lo, hi, w):
    # (1-w) lo + w hi reproduces both endpoints exactly
    return (1.0 - w) * lo + w * hi


def coeffs_at(phi, params: MaterialParams) -> dict:
    """kappa, M, alpha (shape S) and C, Cnu (shape S + (3, 3)) at ``phi``."""
    w = pi_interp(phi)
    wm = w[..., None, None]
    return {
        "kappa": _affine(*params.kappa, w),
        "M": _affine(*params.M, w),
        "alpha": _affine(*params.alpha, w),
        "C": _affine(params.Cm, np.array(params.C_plus, dtype=np.float64), wm),
        "Cnu": _affine(params.Cnum, np.array(params.Cnu_plus, dtype=np.float64), wm),
    }


# --- potential ----------------------------------------------------------------

def psi(phi):
    phi = np.asarray(phi, dtype=np.float64)
    return 0.25 * (1.0 - phi * phi) ** 2


def dpsi_vex(phi):
    phi = np.asarray(phi, dtype=np.float64)
    return phi * phi * phi


def dpsi_cav(phi):
    return -np.asarray(phi, dtype=np.float64)


def d2psi_vex(phi):
    return 3.0 * np.asarray(phi, dtype=np.float64) ** 2


def psi_terms(phi_new, phi_old):
    """Split derivative: implicit convex part plus explicit concave part."""
    return dpsi_vex(phi_new) + dpsi_cav(phi_old)


# --- reduced energy density ----------------------------------------------------

class _Pointwise:
    """Shared intermediate quantities at (phi, eps, theta)."""

    def __init__(self, phi, eps, theta, params: MaterialParams):
        phi = np.asarray(phi, dtype=np.float64)
        eps = np.asarray(eps, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        self.p = params
        self.w = pi_interp(phi)
        self.dw = dpi_interp(phi)
        self.d2w = d2pi_interp(phi)
        self.t1 = params.eigen_slope
        self.d = eps - params.eigenstrain(phi)[..., None] * VOIGT_I
        self.tr = eps[..., 0] + eps[..., 1]
        dM = params.M[1] - params.M[0]
        da = params.alpha[1] - params.alpha[0]
        self.M = params.M[0] + self.w * dM
        self.alpha = params.alpha[0] + self.w * da
        self.M1, self.M2 = self.dw * dM, self.d2w * dM
        self.a1, self.a2 = self.dw * da, self.d2w * da
        self.z = theta - self.alpha * self.tr
        self.Cm_d = self.d @ params.Cm
        self.dC_d = self.d @ params.dC
        self.C_d = self.Cm_d + self.w[..., None] * self.dC_d

    def energy(self):
        W = np.einsum("...i,...i->...", self.d, self.C_d)
        return W + 0.5 * self.M * self.z ** 2

    def d_phi(self):
        dCdd = np.einsum("...i,...i->...", self.d, self.dC_d)
        eig = -2.0 * self.t1 * (self.C_d[..., 0] + self.C_d[..., 1])
        return (eig + self.dw * dCdd + 0.5 * self.M1 * self.z ** 2
                - self.M * self.z * self.a1 * self.tr)

    def d_phiphi(self):
        p = self.p
        dCdd = np.einsum("...i,...i->...", self.d, self.dC_d)
        ICI = (p.Cm[:2, :2].sum() + self.w * p.dC[:2, :2].sum())
        return (-4.0 * self.t1 * self.dw * (self.dC_d[..., 0] + self.dC_d[..., 1])
                + 2.0 * self.t1 ** 2 * ICI
                + self.d2w * dCdd
                + 0.5 * self.M2 * self.z ** 2
                - 2.0 * self.M1 * self.a1 * self.z * self.tr
                + self.M * self.a1 ** 2 * self.tr ** 2
                - self.M * self.a2 * self.z * self.tr)

    def d_phi_eps(self):
        p = self.p
        C_I = p.Cm @ VOIGT_I + self.w[..., None] * (p.dC @ VOIGT_I)
        coef = -self.M1 * self.alpha * self.z + self.M * self.alpha * self.a1 * self.tr \
            - self.M * self.a1 * self.z
        return (-2.0 * self.t1 * C_I + 2.0 * self.dw[..., None] * self.dC_d
                + coef[..., None] * VOIGT_I)

    def d_phi_theta(self):
        return self.M1 * self.z - self.M * self.a1 * self.tr

    def d_eps(self):
        return 2.0 * self.C_d - (self.M * self.alpha * self.z)[..., None] * VOIGT_I

    def d_theta(self):
        return self.M * self.z


def reduced_energy(phi, eps, theta, params: MaterialParams):
    return _Pointwise(phi, eps, theta, params).energy()


def elastic_energy(phi, eps, params: MaterialParams):
    """The elastic part W alone."""
    pw = _Pointwise(phi, eps, np.zeros(np.shape(phi)), params)
    return np.einsum("...i,...i->...", pw.d, pw.C_d)


def energy_parts(phi, eps, theta, params: MaterialParams):
    """(W, M/2 z^2) from one evaluation of the shared intermediates."""
    pw = _Pointwise(phi, eps, theta, params)
    return np.einsum("...i,...i->...", pw.d, pw.C_d), 0.5 * pw.M * pw.z ** 2


def fluid_energy(phi, eps, theta, params: MaterialParams):
    pw = _Pointwise(phi, eps, theta, params)
    return 0.5 * pw.M * pw.z ** 2


def wtilde_phi(phi, eps, theta, params: MaterialParams):
    return _Pointwise(phi, eps, theta, params).d_phi()


def wtilde_phi_phi(phi, eps, theta, params: MaterialParams):
    return _Pointwise(phi, eps, theta, params).d_phiphi()


def wtilde_phi_strain(phi, eps, theta, params: MaterialParams):
    return _Pointwise(phi, eps, theta, params).d_phi_eps()


def wtilde_phi_theta(phi, eps, theta, params: MaterialParams):
    return _Pointwise(phi, eps, theta, params).d_phi_theta()


def wtilde_strain(phi, eps, theta, params: MaterialParams):
    """Voigt stress (sigma11, sigma22, sigma12) conjugate to the engineering strain."""
    return _Pointwise(phi, eps, theta, params).d_eps()


def wtilde_theta(phi, eps, theta, params: MaterialParams):
    return _Pointwise(phi, eps, theta, params).d_theta()


def time_avg_wtilde_phi(phi_old, phi_new, eps_new, theta_new, params: MaterialParams,
                        quad_points: int = 5, derivatives: bool = False):
    """Gauss-Legendre average of ``wtilde_phi`` along the linear path phi_old -> phi_new.

    With ``derivatives=True`` also returns the derivatives of the average with
    respect to ``phi_new``, ``eps_new`` and ``theta_new``.
    """
    s, w = gauss_legendre_unit(quad_points)
    phi_old = np.asarray(phi_old, dtype=np.float64)
    phi_new = np.asarray(phi_new, dtype=np.float64)
    eps_new = np.asarray(eps_new, dtype=np.float64)
    theta_new = np.asarray(theta_new, dtype=np.float64)
    shape = np.broadcast_shapes(phi_old.shape, phi_new.shape, eps_new.shape[:-1],
                                theta_new.shape)
    val = np.zeros(shape)
    if derivatives:
        dphi, deps, dtheta = np.zeros(shape), np.zeros(shape + (3,)), np.zeros(shape)
    for sj, wj in zip(s, w):
        pw = _Pointwise(phi_old + sj * (phi_new - phi_old), eps_new, theta_new, params)
        val += wj * pw.d_phi()
        if derivatives:
            dphi += wj * sj * pw.d_phiphi()
            deps += wj * pw.d_phi_eps()
            dtheta += wj * pw.d_phi_theta()
    if derivatives:
        return val, dphi, deps, dtheta
    return val


def sources_at(phi, eps, theta, params: MaterialParams):
    """(r, s) evaluated pointwise; the shipped source kinds depend on phi only."""
    return params.r(phi), params.s(phi)
