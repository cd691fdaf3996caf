"""Per-pixel ray-traced alpha compositing into color/depth/normal buffers.

Compositing follows depth order of the per-ray density maxima t*: the blend
weight of the k-th sorted Gaussian is

    w_k = a_k E_k * prod_{j<k} (1 - a_j E_j)

where E is the peak density along the ray. The per-sample opacity a*E is
clamped to 0.999 so the transmittance product never collapses to exactly 0.

The batched path never materializes (pixels x Gaussians x 3) tensors: with
the precision matrix Q = R S^-2 R^T every needed quantity is a quadratic or
bilinear form evaluated as a (pixels x Gaussians) matmul. In particular the
intersection-plane normal is -Q d / |Q d|, automatically camera-facing since
d^T Q d > 0.

View-dependent color follows the 3DGS convention: spherical harmonics are
evaluated once per Gaussian in the unit direction from the camera center to
the Gaussian center, offset by +0.5 and clamped to [0, 1].
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core, sh
from .config import SceneConfig
from .scene import CameraView, GaussianScene

MAX_SAMPLE_ALPHA = 0.999


@dataclass
class RaySample:
    """Ordered contributions of one ray: parallel arrays sorted by t*."""

    ids: np.ndarray          # Gaussian indices
    t_star: np.ndarray       # intersection depths (ray parameter units)
    peak: np.ndarray         # E values in (0, 1]
    alpha_e: np.ndarray      # clamped a*E per sample
    weights: np.ndarray      # blend weights w
    transmittance: np.ndarray  # running transmittance BEFORE each sample
    curvature: np.ndarray    # quadratic coefficient A = r_g . r_g per sample

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def accumulation(self) -> float:
        return float(self.weights.sum())


@dataclass
class RenderBuffers:
    color: np.ndarray         # (H, W, 3) in [0, 1]
    depth: np.ndarray         # (H, W) expected t under the blend weights
    normal: np.ndarray        # (H, W, 3) weight-blended plane normals
    accumulation: np.ndarray  # (H, W) sum of blend weights
    contributors: np.ndarray  # (H, W) number of composited samples


def _composite_weights(alpha_e, min_transmittance):
    """Blend weights and pre-sample transmittances for sorted opacities.

    Entries after the transmittance has dropped below the floor get zero
    weight (gather stops early).
    """
    one_minus = 1.0 - alpha_e
    trans = np.concatenate([[1.0], np.cumprod(one_minus)[:-1]])
    keep = trans >= min_transmittance
    w = alpha_e * trans
    w[~keep] = 0.0
    return w, trans, keep


def gather_along_ray(scene: GaussianScene, o, r,
                     config: Optional[SceneConfig] = None) -> RaySample:
    """Collect, cull and depth-sort the Gaussians contributing to one ray."""
    config = config or SceneConfig()
    if len(scene) == 0:
        z = np.zeros(0)
        return RaySample(np.zeros(0, dtype=np.int64), z, z.copy(), z.copy(),
                         z.copy(), z.copy(), z.copy())
    A, B, C = core.ray_coefficients(scene, o, np.atleast_2d(r))
    A = np.maximum(A[0], 1e-300)
    t_star = -B[0] / A
    peak = np.exp(-0.5 * np.maximum(C - B[0] * B[0] / A, 0.0))
    alpha_e = np.minimum(scene.opacities * peak, MAX_SAMPLE_ALPHA)
    keep = (alpha_e >= config.contrib_cutoff) & (t_star >= config.near_clip)
    ids = np.nonzero(keep)[0]
    order = np.argsort(t_star[ids], kind="stable")
    ids = ids[order]
    ae = alpha_e[ids]
    w, trans, kept = _composite_weights(ae, config.min_transmittance)
    ids, ae, w, trans = ids[kept], ae[kept], w[kept], trans[kept]
    return RaySample(ids=ids, t_star=t_star[ids], peak=peak[ids],
                     alpha_e=ae, weights=w, transmittance=trans,
                     curvature=A[ids])


def gather_ray(scene: GaussianScene, view: CameraView, pixel,
               config: Optional[SceneConfig] = None) -> RaySample:
    """Gather for an integer pixel (u, v) of a camera view."""
    u, v = pixel
    if not (0 <= u < view.width and 0 <= v < view.height):
        raise ValueError(f"pixel {pixel} outside image")
    return gather_along_ray(scene, view.center, view.pixel_ray(u, v), config)


def gaussian_colors(scene: GaussianScene, camera_center) -> np.ndarray:
    """Per-Gaussian SH color for one camera (direction to each center)."""
    d = scene.centers - np.asarray(camera_center, dtype=np.float64)[None, :]
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    d = np.divide(d, norms, out=np.zeros_like(d), where=norms > 1e-12)
    return np.clip(sh.eval_sh_color(scene.sh, d), 0.0, 1.0)


def render_view(scene: GaussianScene, view: CameraView,
                config: Optional[SceneConfig] = None,
                row_chunk: int = 64) -> RenderBuffers:
    """Render color, depth, normal and accumulation buffers for one view.

    Deterministic: identical inputs produce bit-identical buffers. Rows are
    processed in chunks to bound the (pixels x Gaussians) working set.
    """
    config = config or SceneConfig()
    H, W = view.height, view.width
    color = np.zeros((H, W, 3))
    depth = np.zeros((H, W))
    normal = np.zeros((H, W, 3))
    accum = np.zeros((H, W))
    contrib = np.zeros((H, W), dtype=np.int64)
    buffers = RenderBuffers(color, depth, normal, accum, contrib)
    if len(scene) == 0:
        return buffers

    o = view.center
    N = len(scene)
    M = core.scene_local_frames(scene)                  # (N, 3, 3)
    Q = np.einsum("nki,nkj->nij", M, M)                 # precision R S^-2 R^T
    og = np.einsum("nij,nj->ni", M, o[None, :] - scene.centers)
    u = np.einsum("nji,nj->ni", M, og)                  # B = d . u
    C = np.einsum("ni,ni->n", og, og)
    qvec = _sym6(Q)
    q2vec = _sym6(np.einsum("nij,njk->nik", Q, Q))
    colors = gaussian_colors(scene, o)                  # (N, 3)
    alphas = scene.opacities

    dirs_all = view.ray_grid().reshape(H * W, 3)
    for start in range(0, H * W, row_chunk * W):
        stop = min(start + row_chunk * W, H * W)
        d = dirs_all[start:stop]                        # (P, 3)
        P = d.shape[0]
        d6 = _quad6(d)
        A = d6 @ qvec.T                                 # (P, N) = d^T Q d
        A = np.maximum(A, 1e-300)
        B = d @ u.T
        t_star = -B / A
        peak = np.exp(-0.5 * np.maximum(C[None, :] - B * B / A, 0.0))
        alpha_e = np.minimum(alphas[None, :] * peak, MAX_SAMPLE_ALPHA)
        keep = (alpha_e >= config.contrib_cutoff) & (t_star >= config.near_clip)
        alpha_e = np.where(keep, alpha_e, 0.0)

        order = np.argsort(np.where(keep, t_star, np.inf), axis=1, kind="stable")
        rows = np.arange(P)[:, None]
        ae_s = alpha_e[rows, order]
        trans = np.concatenate([np.ones((P, 1)),
                                np.cumprod(1.0 - ae_s, axis=1)[:, :-1]], axis=1)
        w_s = ae_s * trans
        w_s[trans < config.min_transmittance] = 0.0
        t_s = t_star[rows, order]

        w = np.zeros_like(w_s)                          # unsorted weights
        np.put_along_axis(w, order, w_s, axis=1)

        acc = w_s.sum(axis=1)
        col = w @ colors
        # normal = -sum_k w_k Q_k d / |Q_k d|; |Q d| = sqrt(d^T Q^2 d)
        qd_norm = np.sqrt(np.maximum(d6 @ q2vec.T, 1e-300))
        coeff = w / qd_norm                             # (P, N)
        nrm = -np.einsum("pij,pj->pi",
                         (coeff @ Q.reshape(N, 9)).reshape(P, 3, 3), d)
        dep = (w_s * np.where(np.isfinite(t_s), t_s, 0.0)).sum(axis=1)
        dep = np.where(acc > 1e-6, dep / np.maximum(acc, 1e-300), 0.0)
        cnt = (w_s > 0.0).sum(axis=1)

        flat = slice(start, stop)
        color.reshape(-1, 3)[flat] = col
        depth.reshape(-1)[flat] = dep
        normal.reshape(-1, 3)[flat] = nrm
        accum.reshape(-1)[flat] = acc
        contrib.reshape(-1)[flat] = cnt
    return buffers


def _sym6(Q):
    """Pack symmetric matrices so that d6 @ pack.T == d^T Q d."""
    return np.stack([Q[:, 0, 0], Q[:, 1, 1], Q[:, 2, 2],
                     2.0 * Q[:, 0, 1], 2.0 * Q[:, 0, 2], 2.0 * Q[:, 1, 2]],
                    axis=1)


def _quad6(d):
    return np.stack([d[:, 0] * d[:, 0], d[:, 1] * d[:, 1], d[:, 2] * d[:, 2],
                     d[:, 0] * d[:, 1], d[:, 0] * d[:, 2], d[:, 1] * d[:, 2]],
                    axis=1)


def depth_to_normal(buffers: RenderBuffers, view: CameraView,
                    accum_threshold: float = 0.5):
    """Normals from the screen-space gradient of the depth buffer.

    Back-projects the depth map to world points, takes central differences
    along both image axes and crosses them. Border pixels and pixels whose
    accumulation (or any 4-neighbour's) falls below the threshold are
    invalid and must not enter any loss.

    Returns (normals (H, W, 3) world-space camera-facing, valid (H, W) bool).
    """
    H, W = view.height, view.width
    dirs = view.ray_grid()                # z=1 scaling: points = o + depth*dir
    points = view.center[None, None, :] + buffers.depth[:, :, None] * dirs
    normals = np.zeros((H, W, 3))
    du = points[1:-1, 2:] - points[1:-1, :-2]
    dv = points[2:, 1:-1] - points[:-2, 1:-1]
    n = np.cross(du, dv)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    ok = norm[:, :, 0] > 1e-12
    n = np.where(ok[:, :, None], n / np.maximum(norm, 1e-300), 0.0)
    flip = np.einsum("hwi,hwi->hw", n, dirs[1:-1, 1:-1]) > 0
    n[flip] *= -1.0
    normals[1:-1, 1:-1] = n
    acc_ok = buffers.accumulation >= accum_threshold
    interior = np.zeros((H, W), dtype=bool)
    interior[1:-1, 1:-1] = ok
    nb_ok = acc_ok.copy()
    nb_ok[1:-1, 1:-1] &= acc_ok[1:-1, 2:] & acc_ok[1:-1, :-2] \
        & acc_ok[2:, 1:-1] & acc_ok[:-2, 1:-1]
    valid = interior & nb_ok
    normals[~valid] = 0.0
    return normals, valid
