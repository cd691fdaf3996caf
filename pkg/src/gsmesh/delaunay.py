"""Incremental 3D Delaunay tetrahedralization (Bowyer-Watson).

Points are inserted one at a time into a triangulation that carries a single
symbolic vertex at infinity: every convex-hull facet is the finite face of
an "infinite" tetrahedron, so insertions outside the current hull need no
special casing. Conflict tests use the adaptive exact predicates, which
makes the cavity retriangulation provably free of degenerate cells: a cavity
boundary face coplanar with the inserted point would force its outer
neighbor into the conflict set.

Conventions:
  * finite tets are stored positively oriented (orient3d(v0, v1, v2, v3) > 0)
  * infinite tets are stored as [f0, f1, f2, INF] with the finite face wound
    outward (hull interior on its negative side)
  * conflicts are strict: a point exactly on a circumsphere does not
    conflict, so cospherical inputs yield an arbitrary but valid
    triangulation of their cell.

Insertion order is canonicalized by lexicographic sort, making the output
independent of the caller's point ordering.
"""

from collections import deque

import numpy as np

from .predicates import collinear, incircle_coplanar, insphere, orient3d

INF = -1

# face k of positively oriented tet (v0, v1, v2, v3), wound so that
# orient3d(face, v_k) > 0
_FACES = ((1, 3, 2), (0, 2, 3), (0, 3, 1), (0, 1, 2))

# hull edge of the face opposite slot k of an infinite tet [x0, x1, x2, INF],
# directed along the outward winding of the finite face (x0, x1, x2)
_HULL_EDGE = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


class CoplanarPointsError(ValueError):
    """All input points lie in one plane; jitter them to tetrahedralize."""


class DelaunayError(RuntimeError):
    pass


class Triangulation:
    def __init__(self, points):
        self.pts = [tuple(map(float, p)) for p in points]
        self.verts = []          # tet vertex ids, INF allowed
        self.nbrs = []           # neighbor tet id across the face opposite slot i
        self.alive = []
        self._free = []
        self._walk_start = 0

    # -- bookkeeping ---------------------------------------------------------

    def _new_tet(self, verts):
        if self._free:
            tid = self._free.pop()
            self.verts[tid] = list(verts)
            self.nbrs[tid] = [-1, -1, -1, -1]
            self.alive[tid] = True
        else:
            tid = len(self.verts)
            self.verts.append(list(verts))
            self.nbrs.append([-1, -1, -1, -1])
            self.alive.append(True)
        return tid

    def _kill(self, tid):
        self.alive[tid] = False
        self._free.append(tid)

    def _is_infinite(self, tid):
        return self.verts[tid][3] == INF

    # -- predicates on tets ---------------------------------------------------

    def _conflict(self, tid, p):
        v = self.verts[tid]
        pts = self.pts
        if v[3] != INF:
            return insphere(pts[v[0]], pts[v[1]], pts[v[2]], pts[v[3]], p) > 0
        a, b, c = pts[v[0]], pts[v[1]], pts[v[2]]
        s = orient3d(a, b, c, p)
        if s != 0:
            return s > 0
        return incircle_coplanar(a, b, c, p) > 0

    def _locate_conflict(self, p):
        """Walk to some tet in conflict with p."""
        cur = self._walk_start
        if not self.alive[cur]:
            cur = next(i for i in range(len(self.verts)) if self.alive[i])
        steps = 0
        limit = 4 * len(self.verts) + 64
        pts = self.pts
        while steps < limit:
            steps += 1
            v = self.verts[cur]
            if v[3] == INF:
                if self._conflict(cur, p):
                    return cur
                cur = self.nbrs[cur][3]     # re-enter the hull
                continue
            moved = False
            for k in range(4):
                f = _FACES[k]
                if orient3d(pts[v[f[0]]], pts[v[f[1]]], pts[v[f[2]]], p) < 0:
                    cur = self.nbrs[cur][k]
                    moved = True
                    break
            if not moved:
                return cur                   # p inside the closed tet
        # degenerate walk loop: fall back to exhaustive scan
        for tid in range(len(self.verts)):
            if self.alive[tid] and self._conflict(tid, p):
                return tid
        raise DelaunayError("no conflicting tetrahedron found (duplicate point?)")

    # -- construction ---------------------------------------------------------

    def _init_simplex(self, order):
        pts = self.pts
        n = len(order)
        if n < 4:
            raise CoplanarPointsError(
                "need at least 4 non-coplanar points to tetrahedralize")
        i0, i1 = order[0], order[1]
        i2 = next((i for i in order[2:]
                   if not collinear(pts[i0], pts[i1], pts[i])), None)
        if i2 is None:
            raise CoplanarPointsError(
                "all points are collinear; jitter the input to tetrahedralize")
        i3 = None
        for i in order[2:]:
            if i == i2:
                continue
            if orient3d(pts[i0], pts[i1], pts[i2], pts[i]) != 0:
                i3 = i
                break
        if i3 is None:
            raise CoplanarPointsError(
                "all points are coplanar; jitter the input to tetrahedralize")
        v = [i0, i1, i2, i3]
        if orient3d(pts[v[0]], pts[v[1]], pts[v[2]], pts[v[3]]) < 0:
            v[2], v[3] = v[3], v[2]
        t0 = self._new_tet(v)
        # one infinite tet per face, finite face wound outward (reversed _FACES)
        inf_tets = []
        for k in range(4):
            f = _FACES[k]
            face = (v[f[0]], v[f[2]], v[f[1]])   # reverse -> outward
            tid = self._new_tet([face[0], face[1], face[2], INF])
            self.nbrs[tid][3] = t0
            self.nbrs[t0][k] = tid
            inf_tets.append(tid)
        # stitch infinite tets to each other across shared hull edges
        edge_map = {}
        for tid in inf_tets:
            a, b, c = self.verts[tid][:3]
            for slot, (i, j) in ((0, (b, c)), (1, (a, c)), (2, (a, b))):
                key = frozenset((i, j))
                other = edge_map.pop(key, None)
                if other is None:
                    edge_map[key] = (tid, slot)
                else:
                    otid, oslot = other
                    self.nbrs[tid][slot] = otid
                    self.nbrs[otid][oslot] = tid
        if edge_map:
            raise DelaunayError("initial hull stitching failed")
        self._walk_start = t0
        return set(v)

    def insert(self, pid):
        p = self.pts[pid]
        seed = self._locate_conflict(p)
        if not self._conflict(seed, p):
            raise DelaunayError(f"point {pid} conflicts with no cell "
                                "(exact duplicate?)")
        # breadth-first conflict region
        cavity = {seed}
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            for nb in self.nbrs[t]:
                if nb not in cavity and self._conflict(nb, p):
                    cavity.add(nb)
                    queue.append(nb)
        # boundary faces: (conflict tet, slot, surviving neighbor)
        boundary = []
        for t in cavity:
            for k in range(4):
                nb = self.nbrs[t][k]
                if nb not in cavity:
                    boundary.append((t, k, nb))
        if not boundary:
            raise DelaunayError("conflict region has no boundary")

        pts = self.pts
        created = []
        side_map = {}
        for t, k, outer in boundary:
            tv = self.verts[t]
            if tv[3] == INF and k < 3:
                # hull-edge face: new infinite tet [u, v, pid, INF]
                e = _HULL_EDGE[k]
                u, v = tv[e[0]], tv[e[1]]
                tid = self._new_tet([u, v, pid, INF])
                base_slot = 2
                sides = ((0, frozenset((v, INF))), (1, frozenset((u, INF))),
                         (3, frozenset((u, v))))
            else:
                f = _FACES[k]
                b0, b1, b2 = tv[f[0]], tv[f[1]], tv[f[2]]
                s = orient3d(pts[b0], pts[b1], pts[b2], p)
                if s == 0:
                    raise DelaunayError(
                        "degenerate cavity face; predicates inconsistent")
                if s < 0:
                    b1, b2 = b2, b1
                tid = self._new_tet([b0, b1, b2, pid])
                base_slot = 3
                sides = ((0, frozenset((b1, b2))), (1, frozenset((b0, b2))),
                         (2, frozenset((b0, b1))))
            # link across the base face to the surviving outer tet
            self.nbrs[tid][base_slot] = outer
            onb = self.nbrs[outer]
            onb[onb.index(t)] = tid
            # link new tets to each other via shared side faces
            for slot, key in sides:
                other = side_map.pop(key, None)
                if other is None:
                    side_map[key] = (tid, slot)
                else:
                    otid, oslot = other
                    self.nbrs[tid][slot] = otid
                    self.nbrs[otid][oslot] = tid
            created.append(tid)
        if side_map:
            raise DelaunayError("cavity stitching failed; open side faces remain")
        for t in cavity:
            self._kill(t)
        for tid in created:
            if self.verts[tid][3] != INF:
                self._walk_start = tid
                break

    def finite_tets(self):
        out = []
        for tid in range(len(self.verts)):
            if self.alive[tid] and self.verts[tid][3] != INF:
                out.append(self.verts[tid])
        return out


def delaunay(points: np.ndarray) -> np.ndarray:
    """Delaunay tetrahedralization of a 3D point set.

    Returns an (M, 4) int array of tetrahedra indexing ``points``; every tet
    is positively oriented and no input point lies strictly inside any tet's
    circumsphere. Exact duplicate points are removed before insertion (the
    surviving index is the first occurrence). Raises CoplanarPointsError
    when the input is degenerate.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")

    # canonical insertion order: lexicographic, exact duplicates dropped
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    uniq = [order[0]] if len(order) else []
    for i in order[1:]:
        j = uniq[-1]
        if pts[i, 0] != pts[j, 0] or pts[i, 1] != pts[j, 1] or pts[i, 2] != pts[j, 2]:
            uniq.append(i)
    uniq = [int(i) for i in uniq]

    tri = Triangulation(pts)
    used = tri._init_simplex(uniq)
    for i in uniq:
        if i not in used:
            tri.insert(i)

    tets = []
    for v in tri.finite_tets():
        a = sorted(v)
        if orient3d(tri.pts[a[0]], tri.pts[a[1]], tri.pts[a[2]], tri.pts[a[3]]) < 0:
            a[2], a[3] = a[3], a[2]
        tets.append(a)
    tets.sort()
    return np.asarray(tets, dtype=np.int64).reshape(-1, 4)


def circumsphere(a, b, c, d):
    """Float circumcenter and radius of a tetrahedron (for audits/tests)."""
    a = np.asarray(a, dtype=np.float64)
    rows = np.stack([np.asarray(x, dtype=np.float64) - a for x in (b, c, d)])
    rhs = 0.5 * np.einsum("ij,ij->i", rows, rows)
    center = a + np.linalg.solve(rows, rhs)
    return center, float(np.linalg.norm(center - a))


def audit_empty_circumsphere(points: np.ndarray, tets: np.ndarray) -> int:
    """Count exact empty-circumsphere violations (any point strictly inside).

    Candidate points are pre-filtered with a KD-tree around each float
    circumcenter, then checked with the exact predicate.
    """
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=np.float64)
    tree = cKDTree(pts)
    violations = 0
    for tet in np.asarray(tets):
        a, b, c, d = (pts[i] for i in tet)
        try:
            center, radius = circumsphere(a, b, c, d)
        except np.linalg.LinAlgError:
            violations += 1      # degenerate tet counts as a violation
            continue
        idx = tree.query_ball_point(center, radius * (1.0 + 1e-7) + 1e-12)
        tset = set(int(i) for i in tet)
        for i in idx:
            if int(i) in tset:
                continue
            if insphere(a, b, c, d, pts[i]) > 0:
                violations += 1
    return violations
