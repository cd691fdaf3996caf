"""Built-in synthetic fixtures shared by tests, checks and example scripts."""

import numpy as np

from .render import render_view
from .scene import CameraView, GaussianScene, look_at_camera


def unit_gaussian_scene(alpha: float = 0.9, color=(1.0, 0.0, 0.0)) -> GaussianScene:
    """One isotropic unit Gaussian at the origin."""
    sh = np.zeros((1, 16, 3))
    sh[0, 0, :] = (np.asarray(color, dtype=np.float64) - 0.5) / 0.28209479177387814
    return GaussianScene(centers=np.zeros((1, 3)), scales=np.ones((1, 3)),
                         rotations=np.array([[1.0, 0.0, 0.0, 0.0]]),
                         opacities=np.array([float(alpha)]), sh=sh)


def surrounding_views(radius: float = 10.0, resolution: int = 512,
                      fov_deg: float = 30.0):
    """26 cameras on a sphere (3x3x3 grid directions), all looking at the origin."""
    dirs = [np.array([x, y, z], dtype=np.float64)
            for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 0, 1)
            if (x, y, z) != (0, 0, 0)]
    views = []
    for i, d in enumerate(dirs):
        d = d / np.linalg.norm(d)
        views.append(look_at_camera(d * radius, (0.0, 0.0, 0.0),
                                    width=resolution, height=resolution,
                                    fov_deg=fov_deg, view_id=i))
    return views


def random_scene(n: int, rng, spread: float = 1.0,
                 scale_range=(-2.5, -0.8), alpha_range=(0.2, 0.95)) -> GaussianScene:
    """Random anisotropic Gaussians for property and oracle tests."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianScene(
        centers=rng.normal(size=(n, 3)) * spread,
        scales=np.exp(rng.uniform(*scale_range, size=(n, 3))),
        rotations=q,
        opacities=rng.uniform(*alpha_range, size=n),
        sh=rng.normal(size=(n, 16, 3)) * 0.2)


def textured_sphere_scene(n: int = 400, radius: float = 1.0, seed: int = 7,
                          scale: float = 0.12, alpha: float = 0.92) -> GaussianScene:
    """Ground-truth scene: small Gaussians tiling a sphere with smooth color.

    Fibonacci-spiral placement; DC color varies with position so views carry
    texture for the photometric loss to lock onto.
    """
    rng = np.random.default_rng(seed)
    i = np.arange(n, dtype=np.float64)
    phi = np.arccos(1.0 - 2.0 * (i + 0.5) / n)
    theta = np.pi * (1.0 + 5.0 ** 0.5) * i
    pts = radius * np.stack([np.sin(phi) * np.cos(theta),
                             np.sin(phi) * np.sin(theta),
                             np.cos(phi)], axis=1)
    colors = 0.5 + 0.4 * np.stack([np.sin(3.0 * pts[:, 0]),
                                   np.sin(3.0 * pts[:, 1] + 1.0),
                                   np.cos(3.0 * pts[:, 2])], axis=1)
    sh = np.zeros((n, 16, 3))
    sh[:, 0, :] = (colors - 0.5) / 0.28209479177387814
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return GaussianScene(centers=pts,
                         scales=np.full((n, 3), scale),
                         rotations=q,
                         opacities=np.full(n, alpha),
                         sh=sh)


def noisy_sphere_init(n: int = 200, radius: float = 1.0, seed: int = 11,
                      noise: float = 0.08, scale: float = 0.15,
                      alpha: float = 0.5) -> GaussianScene:
    """Initialization for sphere fitting: noisy surface points, random colors
    (mimicking an uninformed sparse-point-cloud start)."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * radius + rng.normal(size=(n, 3)) * noise
    sh = np.zeros((n, 16, 3))
    sh[:, 0, :] = (rng.uniform(0.1, 0.9, size=(n, 3)) - 0.5) / 0.28209479177387814
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return GaussianScene(centers=pts,
                         scales=np.full((n, 3), scale),
                         rotations=q,
                         opacities=np.full(n, alpha),
                         sh=sh)


def sphere_fit_views(n_views: int = 16, radius: float = 4.0,
                     resolution: int = 64, fov_deg: float = 35.0,
                     reference_scene: GaussianScene = None):
    """Cameras on a ring-and-poles arrangement; optionally render references."""
    views = []
    golden = np.pi * (3.0 - 5.0 ** 0.5)
    for i in range(n_views):
        z = 1.0 - 2.0 * (i + 0.5) / n_views
        r = np.sqrt(max(1.0 - z * z, 1e-9))
        ang = golden * i
        eye = radius * np.array([r * np.cos(ang), r * np.sin(ang), z])
        views.append(look_at_camera(eye, (0.0, 0.0, 0.0), width=resolution,
                                    height=resolution, fov_deg=fov_deg,
                                    view_id=i))
    if reference_scene is not None:
        for v in views:
            v.image = render_view(reference_scene, v).color
    return views
