"""Ray-traced opacity along rays and the view-minimum opacity field.

The per-Gaussian opacity along a ray ramps up like the 1D Gaussian until the
density maximum at t* and stays at the peak afterwards; blending those ramped
values with the usual transmittance product gives the accumulated opacity at
any depth t. The field value of a 3D point is the minimum of that quantity
over all training views that see the point; points seen by no view keep the
initial value 1.

Evaluation snaps each point to the pixel it projects into: the pixel's
gathered, depth-sorted Gaussian list is shared by every point in that pixel
and each point is evaluated on the pixel's unit-direction ray at its own
metric distance from the camera.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import core
from .config import SceneConfig
from .render import MAX_SAMPLE_ALPHA, RaySample, _composite_weights, \
    gather_along_ray
from .scene import CameraView, GaussianScene


@dataclass
class FieldQuery:
    """Accumulator for a batch of field-point queries across views."""

    points: np.ndarray
    opacity: np.ndarray        # running minimum, initialized to 1
    visited: np.ndarray        # True once any view saw the point

    @staticmethod
    def create(points) -> "FieldQuery":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return FieldQuery(points=pts,
                          opacity=np.ones(len(pts)),
                          visited=np.zeros(len(pts), dtype=bool))

    def update(self, values: np.ndarray, visited: np.ndarray) -> None:
        sel = visited
        self.opacity[sel] = np.minimum(self.opacity[sel], values[sel])
        self.visited |= visited


def partial_opacity(center, scale, quat, o, r, t) -> float:
    """Single-Gaussian ramped opacity at depth t along the ray (o, r)."""
    rl = core.to_local(center, scale, quat, o, r)
    t_star, peak = core.intersect(rl)
    if t >= t_star:
        return peak
    return float(peak * np.exp(-0.5 * rl.A * (t - t_star) ** 2))


def _ramped_alphas(sample: RaySample, alphas: np.ndarray, t: float) -> np.ndarray:
    """Per-sample a * G1D(min(t, t*)) for the gathered, sorted list."""
    dt = np.minimum(t - sample.t_star, 0.0)
    ramp = sample.peak * np.exp(-0.5 * sample.curvature * dt * dt)
    return np.minimum(alphas * ramp, MAX_SAMPLE_ALPHA)


def composite_opacity_at(scene: GaussianScene, sample: RaySample, t) -> np.ndarray:
    """Accumulated opacity at one or more depths t for a gathered ray."""
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if len(sample) == 0:
        out = np.zeros(len(ts))
        return out if np.ndim(t) else out[0]
    alphas = scene.opacities[sample.ids]
    out = np.empty(len(ts))
    for i, ti in enumerate(ts):
        a = _ramped_alphas(sample, alphas, ti)
        w, _, _ = _composite_weights(a, 0.0)
        out[i] = w.sum()
    return out if np.ndim(t) else out[0]


def ray_opacity(scene: GaussianScene, o, r, t,
                config: Optional[SceneConfig] = None):
    """Accumulated opacity at depth t along the world ray (o, r).

    Uses the identical gather and cutoffs as the renderer, so the value at
    t beyond every contribution equals the rendered accumulation.
    """
    config = config or SceneConfig()
    sample = gather_along_ray(scene, o, r, config)
    return composite_opacity_at(scene, sample, t)


def _assign_pixels(view: CameraView, points: np.ndarray, near_clip: float):
    """Nearest pixel, metric distance and visibility for each point."""
    u, v, z = view.project(points)
    ui = np.rint(u)
    vi = np.rint(v)
    visible = (z >= near_clip) & (ui >= 0) & (ui <= view.width - 1) \
        & (vi >= 0) & (vi <= view.height - 1)
    t = np.linalg.norm(points - view.center[None, :], axis=1)
    return ui.astype(np.int64), vi.astype(np.int64), t, visible


def batch_evaluate(scene: GaussianScene, view: CameraView, points,
                   config: Optional[SceneConfig] = None):
    """Single-view opacities for a batch of points, grouped by pixel.

    Points sharing a pixel reuse that pixel's gathered, sorted Gaussian list.
    Returns (values, visited): values hold 1.0 wherever visited is False
    (outside the view frustum).
    """
    config = config or SceneConfig()
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    values = np.ones(len(pts))
    ui, vi, t, visible = _assign_pixels(view, pts, config.near_clip)
    if not visible.any() or len(scene) == 0:
        if len(scene) == 0:
            values[visible] = 0.0
        return values, visible

    o = view.center
    cache: Dict[Tuple[int, int], RaySample] = {}
    alpha_cache: Dict[Tuple[int, int], np.ndarray] = {}
    for idx in np.nonzero(visible)[0]:
        key = (int(ui[idx]), int(vi[idx]))
        sample = cache.get(key)
        if sample is None:
            d = view.pixel_ray(key[0], key[1])
            d = d / np.linalg.norm(d)
            sample = gather_along_ray(scene, o, d, config)
            cache[key] = sample
            alpha_cache[key] = scene.opacities[sample.ids]
        if len(sample) == 0:
            values[idx] = 0.0
            continue
        a = _ramped_alphas(sample, alpha_cache[key], t[idx])
        w, _, _ = _composite_weights(a, 0.0)
        values[idx] = w.sum()
    return values, visible


def batch_evaluate_naive(scene: GaussianScene, view: CameraView, points,
                         config: Optional[SceneConfig] = None):
    """Per-point loop with no pixel grouping; oracle for batch_evaluate."""
    config = config or SceneConfig()
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    values = np.ones(len(pts))
    ui, vi, t, visible = _assign_pixels(view, pts, config.near_clip)
    o = view.center
    for idx in np.nonzero(visible)[0]:
        if len(scene) == 0:
            values[idx] = 0.0
            continue
        d = view.pixel_ray(int(ui[idx]), int(vi[idx]))
        d = d / np.linalg.norm(d)
        sample = gather_along_ray(scene, o, d, config)
        values[idx] = composite_opacity_at(scene, sample, float(t[idx]))
    return values, visible


def field_opacity(scene: GaussianScene, views: Sequence[CameraView], points,
                  config: Optional[SceneConfig] = None) -> np.ndarray:
    """Minimum single-view opacity over all views that see each point.

    Points visible in no view keep opacity 1.0.
    """
    if len(views) == 0:
        raise ValueError("field evaluation requires at least one view")
    query = FieldQuery.create(points)
    for view in views:
        values, visited = batch_evaluate(scene, view, query.points, config)
        query.update(values, visited)
    return query.opacity
