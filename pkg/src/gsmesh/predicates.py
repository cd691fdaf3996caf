"""Adaptive-precision geometric predicates with exact rational fallback.

Each predicate first evaluates its determinant in double precision together
with a conservative error bound derived from the permanent (the sum of the
absolute values of all determinant terms). When the magnitude of the float
result exceeds the bound its sign is trusted; otherwise the determinant is
recomputed exactly with rational arithmetic on the original doubles, which
convert to Fractions without loss.

The bound constants are deliberately loose (one to two orders above the
tight forward-error bounds), trading rare unnecessary exact evaluations for
a simple proof of safety.
"""

from fractions import Fraction

_ORIENT3D_EPS = 1e-14   # tight bound ~7.8e-16 * permanent
_INSPHERE_EPS = 1e-13   # tight bound ~1.8e-15 * permanent
_INCIRCLE_EPS = 1e-13


def _sign(x) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def orient3d(a, b, c, d) -> int:
    """Sign of det[b-a; c-a; d-a]: +1 when d lies on the side of plane (a,b,c)
    pointed to by the right-hand-rule normal of the triangle."""
    bax, bay, baz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    cax, cay, caz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    dax, day, daz = d[0] - a[0], d[1] - a[1], d[2] - a[2]
    m1 = cay * daz - caz * day
    m2 = cax * daz - caz * dax
    m3 = cax * day - cay * dax
    det = bax * m1 - bay * m2 + baz * m3
    perm = abs(bax) * (abs(cay * daz) + abs(caz * day)) \
        + abs(bay) * (abs(cax * daz) + abs(caz * dax)) \
        + abs(baz) * (abs(cax * day) + abs(cay * dax))
    if abs(det) > _ORIENT3D_EPS * perm:
        return _sign(det)
    return _orient3d_exact(a, b, c, d)


def _orient3d_exact(a, b, c, d) -> int:
    ax, ay, az = Fraction(a[0]), Fraction(a[1]), Fraction(a[2])
    r1 = (Fraction(b[0]) - ax, Fraction(b[1]) - ay, Fraction(b[2]) - az)
    r2 = (Fraction(c[0]) - ax, Fraction(c[1]) - ay, Fraction(c[2]) - az)
    r3 = (Fraction(d[0]) - ax, Fraction(d[1]) - ay, Fraction(d[2]) - az)
    det = r1[0] * (r2[1] * r3[2] - r2[2] * r3[1]) \
        - r1[1] * (r2[0] * r3[2] - r2[2] * r3[0]) \
        + r1[2] * (r2[0] * r3[1] - r2[1] * r3[0])
    return _sign(det)


def _det3(r0, r1, r2):
    return r0[0] * (r1[1] * r2[2] - r1[2] * r2[1]) \
        - r0[1] * (r1[0] * r2[2] - r1[2] * r2[0]) \
        + r0[2] * (r1[0] * r2[1] - r1[1] * r2[0])


def _perm3(r0, r1, r2):
    return abs(r0[0]) * (abs(r1[1] * r2[2]) + abs(r1[2] * r2[1])) \
        + abs(r0[1]) * (abs(r1[0] * r2[2]) + abs(r1[2] * r2[0])) \
        + abs(r0[2]) * (abs(r1[0] * r2[1]) + abs(r1[1] * r2[0]))


def insphere(a, b, c, d, p) -> int:
    """+1 when p lies strictly inside the circumsphere of the POSITIVELY
    oriented tetrahedron (a, b, c, d), -1 strictly outside, 0 on the sphere."""
    rows = []
    lifts = []
    for x in (a, b, c, d):
        ux, uy, uz = x[0] - p[0], x[1] - p[1], x[2] - p[2]
        rows.append((ux, uy, uz))
        lifts.append(ux * ux + uy * uy + uz * uz)
    # expansion along the lift column, rows (a, b, c, d)
    det = -lifts[0] * _det3(rows[1], rows[2], rows[3]) \
        + lifts[1] * _det3(rows[0], rows[2], rows[3]) \
        - lifts[2] * _det3(rows[0], rows[1], rows[3]) \
        + lifts[3] * _det3(rows[0], rows[1], rows[2])
    perm = lifts[0] * _perm3(rows[1], rows[2], rows[3]) \
        + lifts[1] * _perm3(rows[0], rows[2], rows[3]) \
        + lifts[2] * _perm3(rows[0], rows[1], rows[3]) \
        + lifts[3] * _perm3(rows[0], rows[1], rows[2])
    # the raw determinant is positive for p inside a NEGATIVELY oriented tet
    if abs(det) > _INSPHERE_EPS * perm:
        return -_sign(det)
    return _insphere_exact(a, b, c, d, p)


def _insphere_exact(a, b, c, d, p) -> int:
    px, py, pz = Fraction(p[0]), Fraction(p[1]), Fraction(p[2])
    rows = []
    lifts = []
    for x in (a, b, c, d):
        ux = Fraction(x[0]) - px
        uy = Fraction(x[1]) - py
        uz = Fraction(x[2]) - pz
        rows.append((ux, uy, uz))
        lifts.append(ux * ux + uy * uy + uz * uz)
    det = -lifts[0] * _det3(rows[1], rows[2], rows[3]) \
        + lifts[1] * _det3(rows[0], rows[2], rows[3]) \
        - lifts[2] * _det3(rows[0], rows[1], rows[3]) \
        + lifts[3] * _det3(rows[0], rows[1], rows[2])
    return -_sign(det)


def _project_axis(a, b, c):
    """Index of the dominant normal component of triangle (a, b, c)."""
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    nx = abs(uy * vz - uz * vy)
    ny = abs(uz * vx - ux * vz)
    nz = abs(ux * vy - uy * vx)
    if nx >= ny and nx >= nz:
        return 0
    return 1 if ny >= nz else 2


def _drop(v, axis):
    if axis == 0:
        return (v[1], v[2])
    if axis == 1:
        return (v[0], v[2])
    return (v[0], v[1])


def _orient2d_sign(a, b, c, exact: bool) -> int:
    if exact:
        det = (Fraction(b[0]) - Fraction(a[0])) * (Fraction(c[1]) - Fraction(a[1])) \
            - (Fraction(b[1]) - Fraction(a[1])) * (Fraction(c[0]) - Fraction(a[0]))
        return _sign(det)
    acx, acy = b[0] - a[0], b[1] - a[1]
    bcx, bcy = c[0] - a[0], c[1] - a[1]
    det = acx * bcy - acy * bcx
    perm = abs(acx * bcy) + abs(acy * bcx)
    if abs(det) > _ORIENT3D_EPS * perm:
        return _sign(det)
    return _orient2d_sign(a, b, c, exact=True)


def incircle_coplanar(a, b, c, p) -> int:
    """In-circle test for four coplanar 3D points.

    +1 when p lies strictly inside the circle through (a, b, c) within their
    common plane, independent of the triangle's winding. The caller
    guarantees coplanarity (orient3d(a, b, c, p) == 0).
    """
    axis = _project_axis(a, b, c)
    a2, b2, c2, p2 = (_drop(v, axis) for v in (a, b, c, p))
    rows = []
    lifts = []
    for x in (a2, b2, c2):
        ux, uy = x[0] - p2[0], x[1] - p2[1]
        rows.append((ux, uy))
        lifts.append(ux * ux + uy * uy)
    det = rows[0][0] * (rows[1][1] * lifts[2] - rows[2][1] * lifts[1]) \
        - rows[0][1] * (rows[1][0] * lifts[2] - rows[2][0] * lifts[1]) \
        + lifts[0] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0])
    perm = abs(rows[0][0]) * (abs(rows[1][1] * lifts[2]) + abs(rows[2][1] * lifts[1])) \
        + abs(rows[0][1]) * (abs(rows[1][0] * lifts[2]) + abs(rows[2][0] * lifts[1])) \
        + lifts[0] * (abs(rows[1][0] * rows[2][1]) + abs(rows[1][1] * rows[2][0]))
    if abs(det) > _INCIRCLE_EPS * perm:
        s = _sign(det)
    else:
        s = _incircle2d_exact(a2, b2, c2, p2)
    return s * _orient2d_sign(a2, b2, c2, exact=False)


def _incircle2d_exact(a2, b2, c2, p2) -> int:
    px, py = Fraction(p2[0]), Fraction(p2[1])
    rows = []
    lifts = []
    for x in (a2, b2, c2):
        ux = Fraction(x[0]) - px
        uy = Fraction(x[1]) - py
        rows.append((ux, uy))
        lifts.append(ux * ux + uy * uy)
    det = rows[0][0] * (rows[1][1] * lifts[2] - rows[2][1] * lifts[1]) \
        - rows[0][1] * (rows[1][0] * lifts[2] - rows[2][0] * lifts[1]) \
        + lifts[0] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0])
    return _sign(det)


def collinear(a, b, c) -> bool:
    """Exact collinearity of three 3D points."""
    ax, ay, az = Fraction(a[0]), Fraction(a[1]), Fraction(a[2])
    ux, uy, uz = Fraction(b[0]) - ax, Fraction(b[1]) - ay, Fraction(b[2]) - az
    vx, vy, vz = Fraction(c[0]) - ax, Fraction(c[1]) - ay, Fraction(c[2]) - az
    return uy * vz == uz * vy and uz * vx == ux * vz and ux * vy == uy * vx
