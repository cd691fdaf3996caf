"""Closed-form ray-Gaussian intersection kernel.

Every ray is transformed into the Gaussian's scale-normalized local frame,
where the density along the ray is a 1D Gaussian in the ray parameter t:

    g(t) = exp(-0.5 * (A t^2 + 2 B t + C)),
    A = r_g . r_g,  B = o_g . r_g,  C = o_g . o_g

with maximum at t* = -B/A and peak value exp(-0.5 (C - B^2/A)). The surface
normal proxy is the world-space normal of the plane that is perpendicular to
the ray in the normalized frame.
"""

from dataclasses import dataclass

import numpy as np

from .scene import GaussianScene, MIN_SCALE, quat_to_rotmat


@dataclass
class RayLocal:
    """A ray expressed in a Gaussian's scale-normalized local frame.

    r_g is generally not unit length; A > 0 for any nonzero world ray.
    """

    o_g: np.ndarray
    r_g: np.ndarray
    A: float
    B: float

    @property
    def C(self) -> float:
        return float(self.o_g @ self.o_g)


@dataclass
class Intersection:
    t_star: float
    peak: float
    normal: np.ndarray


def _local_frame(center, scale, quat):
    """World-to-local map: returns (M, p) with x_local = M @ (x - p)."""
    R = quat_to_rotmat(quat)                  # local-to-world
    s = np.maximum(np.asarray(scale, dtype=np.float64), MIN_SCALE)
    M = R.T / s[:, None]                      # diag(1/s) @ R^T
    return M, np.asarray(center, dtype=np.float64)


def to_local(center, scale, quat, o, r) -> RayLocal:
    """Transform world ray (o, r) into the Gaussian's normalized frame."""
    M, p = _local_frame(center, scale, quat)
    o_g = M @ (np.asarray(o, dtype=np.float64) - p)
    r_g = M @ np.asarray(r, dtype=np.float64)
    return RayLocal(o_g=o_g, r_g=r_g, A=float(r_g @ r_g), B=float(o_g @ r_g))


def intersect(rl: RayLocal):
    """Depth of the density maximum along the ray and its value.

    Returns (t_star, peak); requires A > 0.
    """
    if rl.A <= 0.0:
        raise ValueError("degenerate ray: A must be positive")
    t_star = -rl.B / rl.A
    peak = float(np.exp(-0.5 * (rl.C - rl.B * rl.B / rl.A)))
    return t_star, min(peak, 1.0)


def plane_normal(scale, quat, rl: RayLocal, r_world=None) -> np.ndarray:
    """World-space unit normal of the ray-Gaussian intersection plane.

    In the normalized frame the plane is perpendicular to r_g; mapping the
    normal back to world space gives n = -R^T_local S^-1 r_g (up to sign).
    When the world ray direction is supplied the normal is flipped to face
    the camera (n . r < 0).
    """
    R = quat_to_rotmat(quat)
    s = np.maximum(np.asarray(scale, dtype=np.float64), MIN_SCALE)
    n = -(R @ (rl.r_g / s))
    norm = np.linalg.norm(n)
    if norm < 1e-30:
        raise ValueError("zero ray direction")
    n = n / norm
    if r_world is not None and n @ np.asarray(r_world, dtype=np.float64) > 0:
        n = -n
    return n


def contribution(center, scale, quat, o, r, near_clip: float = 0.2) -> float:
    """Peak density of the Gaussian along the ray, culled behind near_clip."""
    rl = to_local(center, scale, quat, o, r)
    t_star, peak = intersect(rl)
    return peak if t_star >= near_clip else 0.0


def eval_gaussian(center, scale, quat, x) -> float:
    """Direct covariance-form density exp(-0.5 (x-p)^T Sigma^-1 (x-p))."""
    M, p = _local_frame(center, scale, quat)
    d = M @ (np.asarray(x, dtype=np.float64) - p)
    return float(np.exp(-0.5 * d @ d))


# --- batched forms used by the renderer and the opacity field ---------------

def scene_local_frames(scene: GaussianScene):
    """(N, 3, 3) world-to-local maps M_k with x_local = M_k (x - p_k)."""
    R = scene.rotmats()                                   # (N, 3, 3)
    s = np.maximum(scene.scales, MIN_SCALE)
    return np.transpose(R, (0, 2, 1)) / s[:, :, None]


def ray_coefficients(scene: GaussianScene, o, dirs):
    """Quadratic coefficients of every (ray, Gaussian) pair for one origin.

    o: (3,) shared ray origin; dirs: (P, 3) world directions.
    Returns (A, B, C) with A, B of shape (P, N) and C of shape (N,).
    """
    M = scene_local_frames(scene)                          # (N, 3, 3)
    o = np.asarray(o, dtype=np.float64)
    og = np.einsum("nij,nj->ni", M, o - scene.centers)     # (N, 3)
    rg = np.einsum("nij,pj->pni", M, np.asarray(dirs, dtype=np.float64))
    A = np.einsum("pni,pni->pn", rg, rg)
    B = np.einsum("pni,ni->pn", rg, og)
    C = np.einsum("ni,ni->n", og, og)
    return A, B, C


def batched_peaks(scene: GaussianScene, o, dirs):
    """t* and peak for every (ray, Gaussian) pair; shapes (P, N)."""
    A, B, C = ray_coefficients(scene, o, dirs)
    A = np.maximum(A, 1e-300)
    t_star = -B / A
    peak = np.exp(-0.5 * np.maximum(C[None, :] - B * B / A, 0.0))
    return t_star, peak


def batched_normals(scene: GaussianScene, dirs):
    """Camera-facing intersection-plane normals for every (ray, Gaussian) pair.

    dirs: (P, 3). Returns (P, N, 3) unit vectors.
    """
    R = scene.rotmats()
    s = np.maximum(scene.scales, MIN_SCALE)
    M = np.transpose(R, (0, 2, 1)) / s[:, :, None]         # world-to-local
    rg = np.einsum("nij,pj->pni", M, np.asarray(dirs, dtype=np.float64))
    n = -np.einsum("nij,pnj->pni", R, rg / s[None, :, :])
    n /= np.maximum(np.linalg.norm(n, axis=-1, keepdims=True), 1e-30)
    flip = np.einsum("pni,pi->pn", n, np.asarray(dirs, dtype=np.float64)) > 0
    n[flip] *= -1.0
    return n
