"""Adaptive orientation and incircle predicates.

A floating-point evaluation is accepted when it clears Shewchuk's static
error bound; otherwise the determinant is recomputed exactly with
``fractions.Fraction`` (every double is a dyadic rational, so this is exact).
"""
from __future__ import annotations

from fractions import Fraction

_EPS = 2.0**-53
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS


def _sign(x) -> int:
    return int(x > 0) - int(x < 0)


def orient2d(a, b, c) -> int:
    """+1 if ``a, b, c`` turn counter-clockwise, -1 if clockwise, 0 if collinear."""
    detleft = (a[0] - c[0]) * (b[1] - c[1])
    detright = (a[1] - c[1]) * (b[0] - c[0])
    det = detleft - detright
    if abs(det) >= _CCW_BOUND * (abs(detleft) + abs(detright)) and det != 0.0:
        return _sign(det)
    ax, ay, bx, by, cx, cy = (Fraction(v) for v in (a[0], a[1], b[0], b[1], c[0], c[1]))
    return _sign((ax - cx) * (by - cy) - (ay - cy) * (bx - cx))


def incircle(a, b, c, d) -> int:
    """Sign of the incircle determinant.

    For counter-clockwise ``a, b, c``: +1 if ``d`` lies strictly inside their
    circumcircle, -1 outside, 0 on it.
    """
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    t1 = bdx * cdy - bdy * cdx
    t2 = cdx * ady - cdy * adx
    t3 = adx * bdy - ady * bdx
    det = alift * t1 + blift * t2 + clift * t3
    perm = (
        (abs(bdx * cdy) + abs(bdy * cdx)) * alift
        + (abs(cdx * ady) + abs(cdy * adx)) * blift
        + (abs(adx * bdy) + abs(ady * bdx)) * clift
    )
    if abs(det) > _ICC_BOUND * perm:
        return _sign(det)
    F = Fraction
    adx, ady = F(a[0]) - F(d[0]), F(a[1]) - F(d[1])
    bdx, bdy = F(b[0]) - F(d[0]), F(b[1]) - F(d[1])
    cdx, cdy = F(c[0]) - F(d[0]), F(c[1]) - F(d[1])
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - bdy * cdx)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - cdy * adx)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - ady * bdx)
    )
    return _sign(det)


def lexicographic_min(points):
    """Index of the lexicographically smallest coordinate tuple."""
    best = 0
    for k in range(1, len(points)):
        if tuple(points[k]) < tuple(points[best]):
            best = k
    return best
