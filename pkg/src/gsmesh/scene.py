"""Scene containers: batched anisotropic Gaussian primitives and pinhole cameras."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SH_COEFFS = 16  # degree 0..3: 1 + 3 + 5 + 7 basis functions
MIN_SCALE = 1e-8  # guard for singular scale inverses


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions in w-x-y-z order.

    Returns the local-to-world rotation: columns are the Gaussian's axes
    expressed in world coordinates. Accepts shape (4,) or (N, 4).
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(a):
    a = np.asarray(a, dtype=np.float64)
    return np.log(a) - np.log1p(-a)


@dataclass
class GaussianScene:
    """A batch of 3D Gaussian primitives in activated parameter space.

    Fields are parallel arrays over the N primitives:
      centers   (N, 3) world-space means
      scales    (N, 3) strictly positive standard deviations along local axes
      rotations (N, 4) unit quaternions, w-x-y-z
      opacities (N,)   alpha in [0, 1]
      sh        (N, 16, 3) spherical-harmonics color coefficients,
                index 0 is the DC term, channels last
    """

    centers: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64)
        n = len(self)
        if self.centers.shape != (n, 3) or self.scales.shape != (n, 3) \
                or self.rotations.shape != (n, 4) or self.opacities.shape != (n,) \
                or self.sh.shape != (n, SH_COEFFS, 3):
            raise ValueError("inconsistent scene array shapes")

    def __len__(self) -> int:
        return self.centers.shape[0]

    def validate(self, tol: float = 1e-6) -> None:
        """Check the primitive invariants; raises ValueError on violation."""
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        qn = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(qn - 1.0) > tol):
            raise ValueError("quaternions must be unit norm")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise ValueError("opacities must lie in [0, 1]")

    def rotmats(self) -> np.ndarray:
        """(N, 3, 3) local-to-world rotation matrices."""
        return quat_to_rotmat(self.rotations)

    def select(self, mask) -> "GaussianScene":
        return GaussianScene(self.centers[mask], self.scales[mask],
                             self.rotations[mask], self.opacities[mask],
                             self.sh[mask])

    def extent(self) -> float:
        """Radius of the bounding sphere of the centers around their mean."""
        if len(self) == 0:
            return 1.0
        d = np.linalg.norm(self.centers - self.centers.mean(axis=0), axis=1)
        return float(max(d.max(), 1e-6))

    @staticmethod
    def empty() -> "GaussianScene":
        return GaussianScene(np.zeros((0, 3)), np.zeros((0, 3)),
                             np.zeros((0, 4)), np.zeros((0,)),
                             np.zeros((0, SH_COEFFS, 3)))


@dataclass
class CameraView:
    """Pinhole camera: intrinsics plus a world-to-camera rigid transform.

    ``rotation`` maps world to camera coordinates (x right, y down, z forward);
    ``translation`` is the world origin expressed in camera coordinates, so a
    world point p maps to camera space as R @ p + t. Pixel (u, v) with
    u == cx, v == cy looks along the optical axis.
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray        # (3, 3) world-to-camera
    translation: np.ndarray     # (3,)
    image: Optional[np.ndarray] = None   # (H, W, 3) in [0, 1]
    view_id: int = 0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-4:
            raise ValueError(f"camera {self.view_id}: rotation not orthonormal "
                             f"(max deviation {err:.3e})")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def pixel_ray(self, u: float, v: float) -> np.ndarray:
        """World-space ray direction for pixel (u, v), z=1 in camera space.

        With this normalization the ray parameter t equals camera-space depth.
        """
        d = np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])
        return self.rotation.T @ d

    def ray_grid(self) -> np.ndarray:
        """(H, W, 3) world ray directions for every pixel, z=1 normalized."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)       # (H, W)
        d = np.stack([(uu - self.cx) / self.fx,
                      (vv - self.cy) / self.fy,
                      np.ones_like(uu)], axis=-1)
        return d @ self.rotation         # row-vector form of R^T @ d

    def project(self, points: np.ndarray):
        """Project world points: returns (u, v, z) arrays; z is camera depth."""
        p = np.atleast_2d(points)
        cam = p @ self.rotation.T + self.translation
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam[:, 0] / z * self.fx + self.cx
            v = cam[:, 1] / z * self.fy + self.cy
        return u, v, z

    def contains(self, points: np.ndarray, near_clip: float):
        """Frustum test: depth >= near_clip and nearest pixel inside the image."""
        u, v, z = self.project(points)
        ui = np.rint(u)
        vi = np.rint(v)
        return (z >= near_clip) & (ui >= 0) & (ui <= self.width - 1) \
            & (vi >= 0) & (vi <= self.height - 1)


def look_at_camera(eye, target, up=(0.0, 0.0, 1.0), width=128, height=128,
                   fov_deg=45.0, view_id=0, image=None) -> CameraView:
    """Convenience constructor: camera at ``eye`` looking toward ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-8:   # forward parallel to up: pick another up
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd], axis=0)   # world-to-camera rows
    t = -R @ eye
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return CameraView(width=width, height=height, fx=f, fy=f,
                      cx=width / 2.0, cy=height / 2.0,
                      rotation=R, translation=t, image=image, view_id=view_id)
