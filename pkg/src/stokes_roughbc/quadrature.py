"""Gauss quadrature on the reference triangle and the unit interval.

Triangle rules live on the reference cell with vertices (0,0), (1,0), (0,1);
points are stored in barycentric form ``(lam0, lam1, lam2)`` with
``x = lam1, y = lam2``. Weights sum to the reference area 1/2.
"""
from dataclasses import dataclass
from functools import lru_cache
from math import sqrt

import numpy as np


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def barycentric(self):
        """Triangle rules only: (npts, 3) barycentric coordinates."""
        lam12 = self.points
        return np.column_stack([1.0 - lam12[:, 0] - lam12[:, 1], lam12])


# Symmetric orbits, weights normalised to total 1 (scaled by 1/2 on use).
# ("c", w) centroid; ("s21", a, w) permutations of (1-2a, a, a);
# ("s111", a, b, w) permutations of (a, b, 1-a-b).
_S15 = sqrt(15.0)
_ORBITS = {
    1: [("c", 1.0)],
    2: [("s21", 1 / 6, 1 / 3)],
    4: [
        ("s21", 0.4459484909159648, 0.22338158967801133),
        ("s21", 0.09157621350977078, 0.109951743655322),
    ],
    5: [
        ("c", 0.225),
        ("s21", (6 + _S15) / 21, (155 + _S15) / 1200),
        ("s21", (6 - _S15) / 21, (155 - _S15) / 1200),
    ],
    6: [
        ("s21", 0.2492867451709069, 0.11678627572638464),
        ("s21", 0.06308901449150306, 0.050844906370207985),
        ("s111", 0.05314504984481495, 0.3103524510337873, 0.08285107561837032),
    ],
    8: [
        ("c", 0.144315607677787),
        ("s21", 0.459292588292723, 0.095091634267285),
        ("s21", 0.17056930775176, 0.103217370534718),
        ("s21", 0.050547228317031, 0.032458497623198),
        ("s111", 0.008394777409958, 0.263112829634638, 0.027230314174435),
    ],
}
# degrees without a dedicated rule use the next one up
_TRIANGLE_RULE_FOR = {1: 1, 2: 2, 3: 4, 4: 4, 5: 5, 6: 6, 7: 8, 8: 8}


def _expand(orbits):
    bary, w = [], []
    for orbit in orbits:
        kind = orbit[0]
        if kind == "c":
            bary.append((1 / 3, 1 / 3, 1 / 3))
            w.append(orbit[1])
        elif kind == "s21":
            a, weight = orbit[1], orbit[2]
            b = 1.0 - 2.0 * a
            bary += [(b, a, a), (a, b, a), (a, a, b)]
            w += [weight] * 3
        else:
            a, b, weight = orbit[1:]
            c = 1.0 - a - b
            bary += [(a, b, c), (b, c, a), (c, a, b), (b, a, c), (a, c, b), (c, b, a)]
            w += [weight] * 6
    bary = np.array(bary)
    return bary[:, 1:].copy(), 0.5 * np.array(w)


@lru_cache(maxsize=None)
def _triangle_rule(degree):
    if degree not in _TRIANGLE_RULE_FOR:
        raise UnsupportedDegreeError(f"no triangle rule of degree {degree} (supported: 1..8)")
    points, weights = _expand(_ORBITS[_TRIANGLE_RULE_FOR[degree]])
    points.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(points, weights, degree)


def triangle_rule(degree: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle exact for total degree ``degree``."""
    return _triangle_rule(int(degree))


@lru_cache(maxsize=None)
def _segment_rule(degree):
    if not 1 <= degree <= 9:
        raise UnsupportedDegreeError(f"no segment rule of degree {degree} (supported: 1..9)")
    npts = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(npts)
    points, weights = 0.5 * (x + 1.0), 0.5 * w
    points.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(points, weights, degree)


def segment_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree ``degree``."""
    return _segment_rule(int(degree))
