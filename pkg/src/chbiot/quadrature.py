"""Quadrature on the reference triangle and on the unit interval."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (nq, 3) and weights (nq,) summing to one.

    Integrals over a cell K are ``|K| * sum(weights * f(points))``.
    """
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _orbit(bary, weight):
    pts = sorted(set(permutations(bary)))
    return [(p, weight) for p in pts]


# Fully symmetric rules (Dunavant 1985). Symmetry under vertex permutations keeps
# assembled operators invariant under mesh symmetries.
_SYMMETRIC = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: _orbit((2 / 3, 1 / 6, 1 / 6), 1 / 3),
    4: (_orbit((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011)
        + _orbit((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322)),
    5: ([((1 / 3, 1 / 3, 1 / 3), 0.225)]
        + _orbit((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506)
        + _orbit((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827)),
    6: (_orbit((0.501426509658179, 0.249286745170910, 0.249286745170910), 0.116786275726379)
        + _orbit((0.873821971016996, 0.063089014491502, 0.063089014491502), 0.050844906370207)
        + _orbit((0.053145049844817, 0.310352451033784, 0.636502499121399), 0.082851075618374)),
}


def _collapsed_gauss(degree):
    n = degree // 2 + 2
    a, wa = np.polynomial.legendre.leggauss(n)
    a, wa = 0.5 * (a + 1.0), 0.5 * wa
    pts, wts = [], []
    for bi, wb in zip(a, wa):
        for ai, wai in zip(a, wa):
            x, y = ai * (1.0 - bi), bi
            pts.append((1.0 - x - y, x, y))
            wts.append(2.0 * wai * wb * (1.0 - bi))
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Smallest available rule integrating all polynomials of ``degree`` exactly."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    avail = [d for d in sorted(_SYMMETRIC) if d >= max(degree, 1)]
    if avail:
        d = avail[0]
        pts = np.array([p for p, _ in _SYMMETRIC[d]], dtype=np.float64)
        w = np.array([w for _, w in _SYMMETRIC[d]], dtype=np.float64)
        pts /= pts.sum(axis=1, keepdims=True)
        w /= w.sum()
    else:
        d = degree
        pts, w = _collapsed_gauss(degree)
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, d)


@lru_cache(maxsize=None)
def gauss_legendre_unit(n: int):
    """n-point Gauss-Legendre nodes and weights on [0, 1]; exact to degree 2n-1."""
    if n < 1:
        raise ValueError("need at least one quadrature point")
    s, w = np.polynomial.legendre.leggauss(n)
    s, w = 0.5 * (s + 1.0), 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w
