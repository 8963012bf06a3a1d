"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is chosen at import from ``CHBIOT_NUMBA`` (``0``/``off``/``false``
disables JIT) and can be switched at runtime with :func:`set_backend`.
Both backends must agree to rounding; the tests check this.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_env = os.environ.get("CHBIOT_NUMBA", "1").strip().lower()
_backend = "numba" if HAVE_NUMBA and _env not in ("0", "off", "false", "no") else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def pack_material(params) -> np.ndarray:
    """Flat float array of the data needed by the constitutive kernel."""
    return np.concatenate([
        [params.eigen_slope, params.eigen_shift,
         params.M[0], params.M[1] - params.M[0],
         params.alpha[0], params.alpha[1] - params.alpha[0]],
        params.Cm.ravel(), params.dC.ravel(),
    ]).astype(np.float64)


# --- scatter-add of element contributions ----------------------------------

def _scatter_numpy(target, values, nnz):
    return np.bincount(target, weights=values, minlength=nnz)


def _wphi_avg_numpy(phi0, phi1, eps, theta, packed, s, w):
    slope, shift, M0, dM, a0, da = packed[:6]
    Cm = packed[6:15].reshape(3, 3)
    dC = packed[15:24].reshape(3, 3)
    return _wphi_avg_vectorised(phi0, phi1, eps, theta, slope, shift, M0, dM, a0, da, Cm, dC, s, w)


def _wphi_avg_vectorised(phi0, phi1, eps, theta, slope, shift, M0, dM, a0, da, Cm, dC, s, w):
    val = np.zeros_like(phi0)
    der = np.zeros_like(phi0)
    tr = eps[:, 0] + eps[:, 1]
    ICI_m = Cm[:2, :2].sum()
    ICI_d = dC[:2, :2].sum()
    for sj, wj in zip(s, w):
        ph = phi0 + sj * (phi1 - phi0)
        inside = np.abs(ph) <= 1.0
        c = np.clip(ph, -1.0, 1.0)
        pw = 0.25 * (2.0 + 3.0 * c - c * c * c)
        dpw = np.where(inside, 0.75 * (1.0 - ph * ph), 0.0)
        d2pw = np.where(inside, -1.5 * ph, 0.0)
        t = slope * (ph - shift)
        d = eps.copy()
        d[:, 0] -= t
        d[:, 1] -= t
        Cmd = d @ Cm
        dCd = d @ dC
        Cd = Cmd + pw[:, None] * dCd
        ddCd = (d * dCd).sum(axis=1)
        M = M0 + pw * dM
        al = a0 + pw * da
        M1, M2 = dpw * dM, d2pw * dM
        a1, a2 = dpw * da, d2pw * da
        z = theta - al * tr
        g = (-2.0 * slope * (Cd[:, 0] + Cd[:, 1]) + dpw * ddCd + 0.5 * M1 * z * z
             - M * z * a1 * tr)
        gp = (-4.0 * slope * dpw * (dCd[:, 0] + dCd[:, 1])
              + 2.0 * slope * slope * (ICI_m + pw * ICI_d)
              + d2pw * ddCd + 0.5 * M2 * z * z - 2.0 * M1 * a1 * z * tr
              + M * a1 * a1 * tr * tr - M * a2 * z * tr)
        val += wj * g
        der += wj * sj * gp
    return val, der


if HAVE_NUMBA:
    @numba.njit(cache=True)
    def _scatter_numba(target, values, nnz):
        out = np.zeros(nnz)
        for k in range(target.shape[0]):
            out[target[k]] += values[k]
        return out

    @numba.njit(cache=True)
    def _wphi_avg_numba(phi0, phi1, eps, theta, packed, s, w):
        slope, shift = packed[0], packed[1]
        M0, dM, a0, da = packed[2], packed[3], packed[4], packed[5]
        Cm = packed[6:15]
        dC = packed[15:24]
        ICI_m = Cm[0] + Cm[1] + Cm[3] + Cm[4]
        ICI_d = dC[0] + dC[1] + dC[3] + dC[4]
        n = phi0.shape[0]
        val = np.zeros(n)
        der = np.zeros(n)
        d = np.empty(3)
        for i in range(n):
            tr = eps[i, 0] + eps[i, 1]
            acc_v = 0.0
            acc_d = 0.0
            for j in range(s.shape[0]):
                ph = phi0[i] + s[j] * (phi1[i] - phi0[i])
                if ph < -1.0:
                    pw, dpw, d2pw = 0.0, 0.0, 0.0
                elif ph > 1.0:
                    pw, dpw, d2pw = 1.0, 0.0, 0.0
                else:
                    pw = 0.25 * (2.0 + 3.0 * ph - ph * ph * ph)
                    dpw = 0.75 * (1.0 - ph * ph)
                    d2pw = -1.5 * ph
                t = slope * (ph - shift)
                d[0] = eps[i, 0] - t
                d[1] = eps[i, 1] - t
                d[2] = eps[i, 2]
                ddCd = 0.0
                Cd0 = 0.0
                Cd1 = 0.0
                dCd0 = 0.0
                dCd1 = 0.0
                for a in range(3):
                    cm_a = 0.0
                    dc_a = 0.0
                    for b in range(3):
                        cm_a += Cm[3 * a + b] * d[b]
                        dc_a += dC[3 * a + b] * d[b]
                    ddCd += d[a] * dc_a
                    if a == 0:
                        Cd0 = cm_a + pw * dc_a
                        dCd0 = dc_a
                    elif a == 1:
                        Cd1 = cm_a + pw * dc_a
                        dCd1 = dc_a
                M = M0 + pw * dM
                al = a0 + pw * da
                M1 = dpw * dM
                M2 = d2pw * dM
                a1 = dpw * da
                a2 = d2pw * da
                z = theta[i] - al * tr
                g = (-2.0 * slope * (Cd0 + Cd1) + dpw * ddCd + 0.5 * M1 * z * z
                     - M * z * a1 * tr)
                gp = (-4.0 * slope * dpw * (dCd0 + dCd1)
                      + 2.0 * slope * slope * (ICI_m + pw * ICI_d)
                      + d2pw * ddCd + 0.5 * M2 * z * z - 2.0 * M1 * a1 * z * tr
                      + M * a1 * a1 * tr * tr - M * a2 * z * tr)
                acc_v += w[j] * g
                acc_d += w[j] * s[j] * gp
            val[i] = acc_v
            der[i] = acc_d
        return val, der


def scatter_add(target, values, nnz) -> np.ndarray:
    """``out[target[k]] += values[k]`` in index order (deterministic)."""
    values = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if _backend == "numba":
        return _scatter_numba(target, values, nnz)
    return _scatter_numpy(target, values, nnz)


def wphi_average(phi0, phi1, eps, theta, packed, s, w):
    """Time-averaged phi-derivative of the reduced energy and its phi1-derivative.

    Flat arrays over evaluation points: phi0, phi1, theta (n,), eps (n, 3).
    """
    phi0 = np.ascontiguousarray(phi0, dtype=np.float64).ravel()
    phi1 = np.ascontiguousarray(phi1, dtype=np.float64).ravel()
    theta = np.ascontiguousarray(theta, dtype=np.float64).ravel()
    eps = np.ascontiguousarray(eps, dtype=np.float64).reshape(-1, 3)
    s = np.ascontiguousarray(s, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if _backend == "numba":
        return _wphi_avg_numba(phi0, phi1, eps, theta, packed, s, w)
    return _wphi_avg_numpy(phi0, phi1, eps, theta, packed, s, w)
