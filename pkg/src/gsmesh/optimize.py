"""Adam fitting of Gaussian scenes with densification.

The densification candidate metric accumulates the NORMS of the per-pixel
view-space position gradients rather than the norm of their sum, so
Gaussians whose pixel gradients cancel (over-blurred regions) still score
high. Both metrics are tracked; the accumulated-norm metric dominates the
classic one by the triangle inequality.

Cloned Gaussians get their center sampled from the parent's own
distribution instead of copying it, which spreads clustered clones; splits
follow the usual two-children-with-shrunken-scales recipe.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from .config import FitConfig, SceneConfig
from .diff_render import ForwardResult, Splats, ViewTensors, \
    depth_gradient_normals, normal_alignment, render_forward, \
    scene_from_splats, splats_from_scene
from .losses import LossBundle, loss_distortion, loss_normal, loss_photometric
from .scene import CameraView, GaussianScene, quat_to_rotmat


class FitDivergenceError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration


@dataclass
class DensifyStats:
    """Per-Gaussian accumulated densification statistics."""

    norm_sum: np.ndarray       # sum over pixels (and views) of |g_pixel|
    classic_sum: np.ndarray    # sum over views of |sum over pixels g_pixel|
    observations: np.ndarray   # views in which the Gaussian contributed

    @staticmethod
    def zeros(n: int) -> "DensifyStats":
        return DensifyStats(np.zeros(n), np.zeros(n), np.zeros(n))

    def mean_metric(self) -> np.ndarray:
        return self.norm_sum / np.maximum(self.observations, 1.0)

    def candidates(self, threshold: float) -> np.ndarray:
        return self.mean_metric() > threshold


def accumulate_densify(stats: DensifyStats, pixel_grads,
                       visible=None) -> DensifyStats:
    """Update both metrics from one view's per-pixel position gradients.

    pixel_grads: (P, K, 2) array/tensor of per-pixel view-space gradients of
    the loss with respect to each Gaussian's projected center.
    """
    g = pixel_grads.detach().cpu().double().numpy() \
        if torch.is_tensor(pixel_grads) else np.asarray(pixel_grads, dtype=np.float64)
    norms = np.linalg.norm(g, axis=-1)            # (P, K)
    stats.norm_sum += norms.sum(axis=0)
    stats.classic_sum += np.linalg.norm(g.sum(axis=0), axis=-1)
    if visible is None:
        vis = norms.any(axis=0)
    else:
        vis = visible.detach().cpu().numpy() if torch.is_tensor(visible) \
            else np.asarray(visible, dtype=bool)
    stats.observations += vis.astype(np.float64)
    return stats


def _sample_from_gaussians(scene: GaussianScene, idx: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """Sample one point from each selected Gaussian's own distribution."""
    R = quat_to_rotmat(scene.rotations[idx])
    eta = rng.standard_normal((len(idx), 3))
    return scene.centers[idx] + np.einsum("nij,nj->ni", R,
                                          scene.scales[idx] * eta)


def densify_step(scene: GaussianScene, stats: DensifyStats,
                 fit_config: Optional[FitConfig] = None,
                 rng: Optional[np.random.Generator] = None,
                 extent: Optional[float] = None) -> GaussianScene:
    """Clone/split flagged Gaussians, then prune transparent ones.

    Small candidates (max scale below percent_dense * extent) are cloned
    with a sampled center; large ones are split into ``split_count``
    sampled children with scales divided by the split factor.
    """
    fit_config = fit_config or FitConfig()
    rng = rng or np.random.default_rng(fit_config.seed)
    extent = extent if extent is not None else scene.extent()
    flagged = stats.candidates(fit_config.densify_grad_threshold)
    if len(flagged) != len(scene):
        raise ValueError("stats length does not match scene")

    small = scene.scales.max(axis=1) <= fit_config.percent_dense * extent
    clone_idx = np.nonzero(flagged & small)[0]
    split_idx = np.nonzero(flagged & ~small)[0]

    keep = np.ones(len(scene), dtype=bool)
    keep[split_idx] = False          # split parents replaced by children
    parts = [scene.select(keep)]
    if len(clone_idx):
        clones = scene.select(clone_idx)
        clones.centers = _sample_from_gaussians(scene, clone_idx, rng)
        parts.append(clones)
    for _ in range(fit_config.split_count if len(split_idx) else 0):
        child = scene.select(split_idx)
        child.centers = _sample_from_gaussians(scene, split_idx, rng)
        child.scales = child.scales / fit_config.split_scale_factor
        parts.append(child)

    merged = GaussianScene(
        centers=np.concatenate([p.centers for p in parts]),
        scales=np.concatenate([p.scales for p in parts]),
        rotations=np.concatenate([p.rotations for p in parts]),
        opacities=np.concatenate([p.opacities for p in parts]),
        sh=np.concatenate([p.sh for p in parts]))
    alive = merged.opacities >= fit_config.prune_alpha
    return merged.select(alive)


def _position_lr(fit_config: FitConfig, iteration: int, extent: float) -> float:
    t = min(max(iteration / max(fit_config.position_lr_max_steps, 1), 0.0), 1.0)
    log_lr = (1 - t) * math.log(fit_config.lr_position_init) \
        + t * math.log(fit_config.lr_position_final)
    return math.exp(log_lr) * extent


def _build_optimizer(splats: Splats, fit_config: FitConfig, extent: float):
    groups = [
        {"params": [splats.centers], "lr": _position_lr(fit_config, 0, extent),
         "name": "centers"},
        {"params": [splats.log_scales], "lr": fit_config.lr_scale, "name": "scales"},
        {"params": [splats.quats], "lr": fit_config.lr_rotation, "name": "quats"},
        {"params": [splats.logit_opacities], "lr": fit_config.lr_opacity,
         "name": "opacities"},
        {"params": [splats.sh], "lr": fit_config.lr_sh_dc, "name": "sh"},
    ]
    return torch.optim.Adam(groups, lr=0.0, eps=1e-15)


def compute_losses(result: ForwardResult, reference: torch.Tensor,
                   vt: ViewTensors, config: SceneConfig,
                   fit_config: FitConfig) -> LossBundle:
    lc = loss_photometric(result.color.reshape(vt.height, vt.width, 3),
                          reference, fit_config.lambda_dssim)
    ld = loss_distortion(result.weights_sorted, result.tvals_sorted)
    if config.beta_normal > 0.0:
        dn, valid = depth_gradient_normals(result.depth, result.accumulation, vt)
        if fit_config.detach_depth_normal:
            dn = dn.detach()
        dots = normal_alignment(result, vt, dn)
        ln = loss_normal(result.weights, dots, valid)
    else:
        ln = lc.detach() * 0.0
    total = lc + config.alpha_distortion * ld + config.beta_normal * ln
    return LossBundle(photometric=lc, distortion=ld, normal=ln, total=total)


def fit(scene: GaussianScene, views: Sequence[CameraView], iterations: int,
        config: Optional[SceneConfig] = None,
        fit_config: Optional[FitConfig] = None,
        log_fn=None):
    """Optimize all Gaussian parameters against the views' reference images.

    Views must carry reference images. Returns (fitted scene, logs) where
    logs is a list of per-iteration dicts. Deterministic for a fixed seed.
    """
    config = config or SceneConfig()
    fit_config = fit_config or FitConfig()
    refs = []
    for v in views:
        if v.image is None:
            raise ValueError(f"view {v.view_id} has no reference image")
        refs.append(torch.tensor(v.image, dtype=torch.float32))
    logs: List[dict] = []
    if iterations <= 0 or len(scene) == 0:
        return scene, logs

    torch.manual_seed(fit_config.seed)
    rng = np.random.default_rng(fit_config.seed)
    extent = scene.extent()
    splats = splats_from_scene(scene)
    optimizer = _build_optimizer(splats, fit_config, extent)
    vts = [ViewTensors.from_view(v) for v in views]
    stats = DensifyStats.zeros(len(scene))

    for it in range(iterations):
        vi = it % len(views)
        densify_phase = fit_config.densify_interval > 0 \
            and it <= fit_config.densify_until
        result = render_forward(splats, vts[vi], config.near_clip,
                                with_pixel_grads=densify_phase)
        bundle = compute_losses(result, refs[vi], vts[vi], config, fit_config)
        if not torch.isfinite(bundle.total):
            raise FitDivergenceError(it)

        optimizer.zero_grad(set_to_none=True)
        bundle.total.backward()
        if densify_phase and result.pixel_offsets is not None \
                and result.pixel_offsets.grad is not None:
            accumulate_densify(stats, result.pixel_offsets.grad, result.visible)

        for group in optimizer.param_groups:
            if group["name"] == "centers":
                group["lr"] = _position_lr(fit_config, it, extent)
        optimizer.step()
        with torch.no_grad():
            splats.quats /= splats.quats.norm(dim=1, keepdim=True)

        entry = {"iter": it,
                 "loss_photometric": bundle.photometric.detach().item(),
                 "loss_distortion": bundle.distortion.detach().item(),
                 "loss_normal": bundle.normal.detach().item(),
                 "total": bundle.total.detach().item(),
                 "gaussians": len(splats)}
        logs.append(entry)
        if log_fn is not None:
            log_fn(entry)

        do_densify = fit_config.densify_interval > 0 \
            and fit_config.densify_from <= it + 1 <= fit_config.densify_until \
            and (it + 1) % fit_config.densify_interval == 0
        if do_densify:
            current = scene_from_splats(splats)
            current = densify_step(current, stats, fit_config, rng, extent)
            if len(current) == 0:
                raise FitDivergenceError(it)
            splats = splats_from_scene(current)
            optimizer = _build_optimizer(splats, fit_config, extent)
            stats = DensifyStats.zeros(len(current))

    return scene_from_splats(splats), logs
