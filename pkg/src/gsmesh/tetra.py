"""Gaussian-induced tetrahedral grids and level-set extraction.

Grid vertices are the centers and oriented-bounding-box corners of the
Gaussians (box extent = box_sigma times the scales). Cells come from a
Delaunay tetrahedralization and are filtered so no surviving edge connects
two Gaussians farther apart than the sum of their largest box extents.
Marching tetrahedra classifies vertices against the level value; each
sign-crossing edge is refined by bisection on fresh opacity-field
evaluations (batched across all edges, one pass over the views per round)
before the final linear interpolation.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import SceneConfig
from .delaunay import delaunay
from .field import FieldQuery, batch_evaluate
from .scene import CameraView, GaussianScene

_TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_TIE_BREAK = 1e-9


@dataclass
class TetrahedralGrid:
    vertices: np.ndarray               # (V, 3) deduplicated positions
    tets: np.ndarray                   # (T, 4) vertex indices
    provenance: np.ndarray             # (V,) spawning Gaussian index
    reach: np.ndarray                  # (V,) box_sigma * max scale of parent
    opacities: Optional[np.ndarray] = None   # (V,) field values
    visited: Optional[np.ndarray] = None     # (V,) seen by any view


@dataclass
class TriangleMesh:
    vertices: np.ndarray               # (V, 3)
    triangles: np.ndarray              # (F, 3)
    values: np.ndarray                 # (V,) field diagnostic at extraction

    def euler_characteristic(self) -> int:
        edges = set()
        for t in self.triangles:
            for i, j in ((0, 1), (1, 2), (0, 2)):
                edges.add((min(t[i], t[j]), max(t[i], t[j])))
        return len(self.vertices) - len(edges) + len(self.triangles)

    def boundary_edge_count(self) -> int:
        """Edges not shared by exactly two triangles (0 for watertight)."""
        from collections import Counter

        counts = Counter()
        for t in self.triangles:
            for i, j in ((0, 1), (1, 2), (0, 2)):
                counts[(min(t[i], t[j]), max(t[i], t[j]))] += 1
        return sum(1 for c in counts.values() if c != 2)

    @staticmethod
    def empty() -> "TriangleMesh":
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                            np.zeros((0,)))


@dataclass
class ExtractStats:
    grid_vertices: int = 0
    tets_total: int = 0
    tets_kept: int = 0
    crossings: int = 0
    unvisited_crossings: int = 0
    refine_rounds: int = 0


def generate_vertices(scene: GaussianScene, config: Optional[SceneConfig] = None):
    """Grid vertex candidates: center plus 8 oriented box corners per Gaussian.

    The caller prunes low-alpha Gaussians beforehand. Returns
    (points, provenance, reach) with near-duplicate points merged by hashing
    coordinates quantized to 1e-6 of the point-cloud extent; merged points
    keep the first parent and the largest reach.
    """
    config = config or SceneConfig()
    n = len(scene)
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros(0)
    R = scene.rotmats()                                  # (N, 3, 3)
    half = config.box_sigma * scene.scales               # (N, 3)
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                      for sz in (-1, 1)], dtype=np.float64)   # (8, 3)
    corners = scene.centers[:, None, :] + np.einsum(
        "nij,nkj->nki", R, signs[None, :, :] * half[:, None, :])
    pts = np.concatenate([scene.centers[:, None, :], corners], axis=1)  # (N, 9, 3)
    pts = pts.reshape(-1, 3)
    parent = np.repeat(np.arange(n, dtype=np.int64), 9)
    reach = (config.box_sigma * scene.scales.max(axis=1))[parent]

    span = pts.max(axis=0) - pts.min(axis=0)
    quantum = max(float(span.max()), 1e-12) * 1e-6
    keys = np.round(pts / quantum).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True,
                                  return_inverse=True)
    uniq_pts = pts[first]
    uniq_parent = parent[first]
    uniq_reach = np.zeros(len(first))
    np.maximum.at(uniq_reach, inverse, reach)
    return uniq_pts, uniq_parent, uniq_reach


def build_grid(scene: GaussianScene, config: Optional[SceneConfig] = None) -> TetrahedralGrid:
    """Vertices + Delaunay cells for a pre-pruned scene."""
    points, provenance, reach = generate_vertices(scene, config)
    tets = delaunay(points) if len(points) >= 4 else np.zeros((0, 4), dtype=np.int64)
    return TetrahedralGrid(vertices=points, tets=tets,
                           provenance=provenance, reach=reach)


def filter_cells(grid: TetrahedralGrid) -> TetrahedralGrid:
    """Drop tets with an edge connecting non-overlapping Gaussians.

    An edge between vertices of distinct parents is kept when its length is
    at most the sum of the parents' reaches (boundary: equality kept);
    edges within one Gaussian are kept unconditionally.
    """
    if len(grid.tets) == 0:
        return grid
    keep = np.ones(len(grid.tets), dtype=bool)
    v, par, reach = grid.vertices, grid.provenance, grid.reach
    for i, j in _TET_EDGES:
        a = grid.tets[:, i]
        b = grid.tets[:, j]
        cross = par[a] != par[b]
        length = np.linalg.norm(v[a] - v[b], axis=1)
        bad = cross & (length > reach[a] + reach[b])
        keep &= ~bad
    return TetrahedralGrid(vertices=v, tets=grid.tets[keep],
                           provenance=par, reach=reach,
                           opacities=grid.opacities, visited=grid.visited)


@dataclass
class CrossingSet:
    """Sign-crossing tet edges and the triangles welded on them.

    Brackets are ordered so values[:, 0] < level < values[:, 1]. Triangle
    rows index into the crossing list; ``outward`` holds a per-triangle
    reference direction from the inside region toward the outside used to
    orient the final faces.
    """

    edge_vertices: np.ndarray       # (E, 2) grid vertex ids, low value first
    endpoints_low: np.ndarray       # (E, 3) position with value < level
    endpoints_high: np.ndarray      # (E, 3) position with value > level
    values_low: np.ndarray          # (E,)
    values_high: np.ndarray         # (E,)
    triangles: np.ndarray           # (F, 3) crossing indices
    outward: np.ndarray             # (F, 3) inside -> outside reference


def marching_tetrahedra(grid: TetrahedralGrid, level: float) -> CrossingSet:
    """Classify tets against the level and emit welded crossing triangles.

    Vertex values exactly equal to the level are perturbed by +1e-9 so every
    crossing edge brackets the level strictly. Cases: one vertex on its own
    side gives one triangle, a 2-2 split gives two.
    """
    vals = np.asarray(grid.opacities, dtype=np.float64).copy()
    vals[vals == level] += _TIE_BREAK
    inside = vals > level

    edge_index = {}
    edge_list = []
    triangles = []
    outward = []

    def crossing(a, b):
        key = (a, b) if a < b else (b, a)
        idx = edge_index.get(key)
        if idx is None:
            idx = len(edge_list)
            edge_index[key] = idx
            edge_list.append(key)
        return idx

    verts = grid.vertices
    for tet in grid.tets:
        m = inside[tet]
        n_in = int(m.sum())
        if n_in == 0 or n_in == 4:
            continue
        ins = tet[m]
        outs = tet[~m]
        ref = verts[outs].mean(axis=0) - verts[ins].mean(axis=0)
        if n_in == 1 or n_in == 3:
            lone = ins[0] if n_in == 1 else outs[0]
            others = outs if n_in == 1 else ins
            e = [crossing(lone, int(o)) for o in others]
            triangles.append(e)
            outward.append(ref)
        else:
            a, b = int(ins[0]), int(ins[1])
            c, d = int(outs[0]), int(outs[1])
            # quad cycle (a,c) (a,d) (b,d) (b,c): adjacent corners share a vertex
            q = [crossing(a, c), crossing(a, d), crossing(b, d), crossing(b, c)]
            triangles.append([q[0], q[1], q[2]])
            triangles.append([q[0], q[2], q[3]])
            outward.append(ref)
            outward.append(ref)

    E = len(edge_list)
    ev = np.asarray(edge_list, dtype=np.int64).reshape(E, 2)
    low = np.where(vals[ev[:, 0]] < level, ev[:, 0], ev[:, 1])
    high = np.where(vals[ev[:, 0]] < level, ev[:, 1], ev[:, 0])
    return CrossingSet(
        edge_vertices=np.stack([low, high], axis=1),
        endpoints_low=verts[low].copy(),
        endpoints_high=verts[high].copy(),
        values_low=vals[low].copy(),
        values_high=vals[high].copy(),
        triangles=np.asarray(triangles, dtype=np.int64).reshape(-1, 3),
        outward=np.asarray(outward, dtype=np.float64).reshape(-1, 3))


def binary_search_refine(scene: GaussianScene, views: Sequence[CameraView],
                         crossings: CrossingSet, level: float, steps: int,
                         config: Optional[SceneConfig] = None):
    """Bisect each crossing edge on fresh field evaluations, then interpolate.

    Each round evaluates the opacity field at the midpoints of all active
    brackets in one batch (one pass over the views) and keeps the half
    bracket containing the sign change; after ``steps`` rounds the vertex is
    placed by linear interpolation to the level inside the final bracket.

    Returns (positions (E, 3), values_low, values_high) of the final
    brackets. Raises ValueError on a non-bracketing input edge.
    """
    config = config or SceneConfig()
    p1 = crossings.endpoints_low.copy()
    p2 = crossings.endpoints_high.copy()
    o1 = crossings.values_low.copy()
    o2 = crossings.values_high.copy()
    bad = ~((o1 < level) & (o2 > level))
    if bad.any():
        raise ValueError(f"edge {int(np.nonzero(bad)[0][0])} does not bracket "
                         "the level (monotonicity premise violated)")
    for _ in range(steps):
        mid = 0.5 * (p1 + p2)
        query = FieldQuery.create(mid)
        for view in views:
            values, visited = batch_evaluate(scene, view, mid, config)
            query.update(values, visited)
        om = query.opacity
        hi_side = om > level
        p2[hi_side] = mid[hi_side]
        o2[hi_side] = om[hi_side]
        p1[~hi_side] = mid[~hi_side]
        o1[~hi_side] = om[~hi_side]
    t = (level - o1) / (o2 - o1)
    t = np.clip(t, 0.0, 1.0)[:, None]
    return p1 + t * (p2 - p1), o1, o2


def _orient_triangles(positions, triangles, outward):
    """Flip faces whose geometric normal opposes the inside->outside reference."""
    if len(triangles) == 0:
        return triangles
    a = positions[triangles[:, 0]]
    b = positions[triangles[:, 1]]
    c = positions[triangles[:, 2]]
    n = np.cross(b - a, c - a)
    flip = np.einsum("ij,ij->i", n, outward) < 0
    tri = triangles.copy()
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def _drop_degenerate(positions, triangles, area_tol=1e-12):
    if len(triangles) == 0:
        return triangles
    a = positions[triangles[:, 0]]
    b = positions[triangles[:, 1]]
    c = positions[triangles[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return triangles[area > area_tol]


def extract_mesh(scene: GaussianScene, views: Sequence[CameraView],
                 config: Optional[SceneConfig] = None,
                 return_stats: bool = False):
    """End-to-end level-set extraction from a Gaussian scene.

    Pipeline: alpha pruning, grid generation, Delaunay, overlap filtering,
    opacity-field evaluation at the grid vertices, marching tetrahedra, and
    bisection refinement. Deterministic given identical inputs.
    """
    config = config or SceneConfig()
    stats = ExtractStats(refine_rounds=config.binary_steps)
    pruned = scene.select(scene.opacities >= config.prune_alpha)
    if len(pruned) == 0:
        warnings.warn("no Gaussians above the prune threshold; empty mesh")
        mesh = TriangleMesh.empty()
        return (mesh, stats) if return_stats else mesh

    grid = build_grid(pruned, config)
    stats.grid_vertices = len(grid.vertices)
    stats.tets_total = len(grid.tets)
    grid = filter_cells(grid)
    stats.tets_kept = len(grid.tets)
    if len(grid.tets) == 0:
        warnings.warn("tetrahedral grid is empty; empty mesh")
        mesh = TriangleMesh.empty()
        return (mesh, stats) if return_stats else mesh

    query = FieldQuery.create(grid.vertices)
    for view in views:
        values, visited = batch_evaluate(pruned, view, grid.vertices, config)
        query.update(values, visited)
    grid.opacities = query.opacity
    grid.visited = query.visited

    crossings = marching_tetrahedra(grid, config.level)
    stats.crossings = len(crossings.edge_vertices)
    if stats.crossings:
        stats.unvisited_crossings = int(
            (~grid.visited[crossings.edge_vertices]).any(axis=1).sum())
    if len(crossings.triangles) == 0:
        mesh = TriangleMesh.empty()
        return (mesh, stats) if return_stats else mesh

    positions, o1, o2 = binary_search_refine(
        pruned, views, crossings, config.level, config.binary_steps, config)
    tri = _orient_triangles(positions, crossings.triangles, crossings.outward)
    tri = _drop_degenerate(positions, tri)
    t = (config.level - o1) / (o2 - o1)
    values = np.where(t < 0.5, o1, o2)     # nearest final-bracket field value
    mesh = TriangleMesh(vertices=positions, triangles=tri, values=values)
    return (mesh, stats) if return_stats else mesh
