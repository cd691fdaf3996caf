"""Differentiable forward pass of the ray-traced renderer (torch).

Mirrors the numpy renderer's math on (pixels x Gaussians) tensors so
autograd can differentiate every buffer with respect to the raw Gaussian
parameters. All per-pair quantities are quadratic/bilinear forms in the
per-Gaussian precision matrix Q = R S^-2 R^T, evaluated as matmuls; no
(pixels x Gaussians x 3) tensor is ever built.

For densification statistics the forward can route each Gaussian's center
through a per-pixel view-space offset leaf (zeros). The offset enters the
ray coefficients B and C through their exact first-order terms, so after
backward the leaf's gradient holds the per-pixel position gradients in
image (pixel) units while forward values are untouched.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .render import MAX_SAMPLE_ALPHA
from .scene import CameraView, GaussianScene
from .sh import sh_basis


@dataclass
class Splats:
    """Raw (pre-activation) Gaussian parameters as torch leaves."""

    centers: torch.Tensor          # (K, 3)
    log_scales: torch.Tensor       # (K, 3)
    quats: torch.Tensor            # (K, 4) unnormalized
    logit_opacities: torch.Tensor  # (K,)
    sh: torch.Tensor               # (K, 16, 3)

    def parameters(self):
        return [self.centers, self.log_scales, self.quats,
                self.logit_opacities, self.sh]

    def __len__(self):
        return self.centers.shape[0]


def splats_from_scene(scene: GaussianScene, dtype=torch.float32,
                      requires_grad: bool = True) -> Splats:
    eps = 1e-6
    alphas = np.clip(scene.opacities, eps, 1.0 - eps)
    t = lambda a: torch.tensor(np.asarray(a), dtype=dtype,
                               requires_grad=requires_grad)
    return Splats(centers=t(scene.centers),
                  log_scales=t(np.log(scene.scales)),
                  quats=t(scene.rotations),
                  logit_opacities=t(np.log(alphas) - np.log1p(-alphas)),
                  sh=t(scene.sh))


def scene_from_splats(splats: Splats) -> GaussianScene:
    with torch.no_grad():
        q = splats.quats / splats.quats.norm(dim=1, keepdim=True)
        return GaussianScene(
            centers=splats.centers.double().numpy().copy(),
            scales=splats.log_scales.double().exp().numpy().copy(),
            rotations=q.double().numpy().copy(),
            opacities=torch.sigmoid(splats.logit_opacities).double().numpy().copy(),
            sh=splats.sh.double().numpy().copy())


def quats_to_rotmats(quats: torch.Tensor) -> torch.Tensor:
    q = quats / quats.norm(dim=1, keepdim=True)
    w, x, y, z = q.unbind(dim=1)
    return torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], dim=1).reshape(-1, 3, 3)


@dataclass
class ViewTensors:
    """Per-view constants (rays, pose) on the render dtype."""

    origin: torch.Tensor       # (3,)
    dirs: torch.Tensor         # (P, 3) z=1-normalized world directions
    dirs6: torch.Tensor        # (P, 6) packed quadratic monomials
    rot_w2c: torch.Tensor      # (3, 3)
    fx: float
    fy: float
    height: int
    width: int

    @staticmethod
    def from_view(view: CameraView, dtype=torch.float32) -> "ViewTensors":
        dirs = torch.tensor(view.ray_grid().reshape(-1, 3), dtype=dtype)
        d6 = torch.stack([dirs[:, 0] * dirs[:, 0], dirs[:, 1] * dirs[:, 1],
                          dirs[:, 2] * dirs[:, 2], dirs[:, 0] * dirs[:, 1],
                          dirs[:, 0] * dirs[:, 2], dirs[:, 1] * dirs[:, 2]],
                         dim=1)
        return ViewTensors(
            origin=torch.tensor(view.center, dtype=dtype),
            dirs=dirs, dirs6=d6,
            rot_w2c=torch.tensor(view.rotation, dtype=dtype),
            fx=view.fx, fy=view.fy, height=view.height, width=view.width)


def _sym6(Q: torch.Tensor) -> torch.Tensor:
    return torch.stack([Q[:, 0, 0], Q[:, 1, 1], Q[:, 2, 2],
                        2.0 * Q[:, 0, 1], 2.0 * Q[:, 0, 2], 2.0 * Q[:, 1, 2]],
                       dim=1)


@dataclass
class ForwardResult:
    color: torch.Tensor            # (P, 3)
    accumulation: torch.Tensor     # (P,)
    depth: torch.Tensor            # (P,)
    normal: torch.Tensor           # (P, 3) weight-blended plane normals
    weights_sorted: torch.Tensor   # (P, K) sorted ascending by t*
    tvals_sorted: torch.Tensor     # (P, K)
    weights: torch.Tensor          # (P, K) original Gaussian order
    qmats: torch.Tensor            # (K, 3, 3) precision matrices (in graph)
    qd_norm: torch.Tensor          # (P, K) |Q_k d_p| (in graph)
    pixel_offsets: Optional[torch.Tensor]  # (P, K, 2) zero leaf or None
    visible: torch.Tensor          # (K,) bool, contributed anywhere


def render_forward(splats: Splats, vt: ViewTensors, near_clip: float = 0.2,
                   with_pixel_grads: bool = False) -> ForwardResult:
    P = vt.dirs.shape[0]
    K = len(splats)
    dtype = splats.centers.dtype

    R = quats_to_rotmats(splats.quats)                   # local -> world
    scales = splats.log_scales.exp()
    alphas = torch.sigmoid(splats.logit_opacities)
    M = R.transpose(1, 2) / scales.unsqueeze(2)          # world -> local
    Q = M.transpose(1, 2) @ M                            # R S^-2 R^T
    qvec = _sym6(Q)

    o_minus_c = vt.origin.unsqueeze(0) - splats.centers  # (K, 3)
    og = torch.einsum("kij,kj->ki", M, o_minus_c)
    u = torch.einsum("kji,kj->ki", M, og)                # B = d . u
    C0 = (og * og).sum(-1)                               # (K,)

    A = (vt.dirs6 @ qvec.T).clamp(min=1e-30)             # (P, K) = d^T Q d
    B = vt.dirs @ u.T                                    # (P, K)
    C = C0.unsqueeze(0)

    pixel_offsets = None
    if with_pixel_grads:
        # first-order effect of a view-space center offset on B and C;
        # the offset leaf stays at zero so forward values are unchanged
        with torch.no_grad():
            cam = o_minus_c.neg() @ vt.rot_w2c.T
            z = cam[:, 2].clamp(min=near_clip)
            basis = torch.zeros(K, 3, 2, dtype=dtype)
            basis[:, 0, 0] = z / vt.fx
            basis[:, 1, 1] = z / vt.fy
            basis = vt.rot_w2c.T.unsqueeze(0) @ basis    # (K, 3, 2) world per px
        qb = Q @ basis                                   # (K, 3, 2), in graph
        t_b = -(vt.dirs @ qb.permute(1, 0, 2).reshape(3, K * 2)).reshape(P, K, 2)
        q_oc = torch.einsum("kij,kj->ki", Q, o_minus_c)
        t_c = -2.0 * torch.einsum("ki,kij->kj", q_oc, basis)
        pixel_offsets = torch.zeros(P, K, 2, dtype=dtype, requires_grad=True)
        B = B + (t_b * pixel_offsets).sum(-1)
        C = C + (t_c.unsqueeze(0) * pixel_offsets).sum(-1)

    t_star = -B / A
    peak = torch.exp(-0.5 * (C - B * B / A).clamp(min=0.0))
    vis = (t_star >= near_clip).to(dtype)
    alpha_e = (alphas.unsqueeze(0) * peak * vis).clamp(max=MAX_SAMPLE_ALPHA)

    # numpy's quicksort is several times faster than torch's CPU sort here;
    # indices carry no gradient so the detour is free
    order = torch.from_numpy(
        np.argsort(t_star.detach().numpy(), axis=1).astype(np.int64))
    ae_s = torch.gather(alpha_e, 1, order)
    t_s = torch.gather(t_star, 1, order)
    trans = torch.cumprod(1.0 - ae_s, dim=1)
    trans = torch.cat([torch.ones(P, 1, dtype=dtype), trans[:, :-1]], dim=1)
    w_s = ae_s * trans

    inv = torch.empty_like(order)
    inv.scatter_(1, order, torch.arange(K).expand(P, K))
    w = torch.gather(w_s, 1, inv)                        # original order

    # per-Gaussian SH color toward each center
    cdir = -o_minus_c
    cdir = cdir / cdir.norm(dim=1, keepdim=True).clamp(min=1e-12)
    colors = ((splats.sh * sh_basis(cdir).unsqueeze(-1)).sum(1) + 0.5).clamp(0.0, 1.0)

    accum = w_s.sum(dim=1)
    color = w @ colors
    depth = (w_s * t_s).sum(dim=1) / accum.clamp(min=1e-6)
    qd_norm = (vt.dirs6 @ _sym6(Q @ Q).T).clamp(min=1e-30).sqrt()   # |Q d|
    coeff = w / qd_norm
    normal = -torch.bmm((coeff @ Q.reshape(K, 9)).reshape(P, 3, 3),
                        vt.dirs.unsqueeze(2)).squeeze(2)
    visible = (alpha_e > 0).any(dim=0)
    return ForwardResult(color=color, accumulation=accum, depth=depth,
                         normal=normal, weights_sorted=w_s, tvals_sorted=t_s,
                         weights=w, qmats=Q, qd_norm=qd_norm,
                         pixel_offsets=pixel_offsets, visible=visible)


def normal_alignment(result: ForwardResult, vt: ViewTensors,
                     depth_normals: torch.Tensor) -> torch.Tensor:
    """Per-(pixel, Gaussian) dot products n_k . N without (P, K, 3) tensors.

    n_k(p) = -Q_k d_p / |Q_k d_p|, so the dot is a bilinear form of Q_k with
    the outer product N d^T.
    """
    P = vt.dirs.shape[0]
    K = result.qmats.shape[0]
    dn = (depth_normals.unsqueeze(2) * vt.dirs.unsqueeze(1)).reshape(P, 9)
    num = -(dn @ result.qmats.reshape(K, 9).T)
    return num / result.qd_norm


def depth_gradient_normals(depth: torch.Tensor, accumulation: torch.Tensor,
                           vt: ViewTensors, accum_threshold: float = 0.5):
    """Differentiable normals from the depth buffer's screen-space gradient.

    Returns (normals (P, 3) world space camera-facing, valid (P,) bool);
    border pixels and pixels with low accumulation are invalid.
    """
    H, W = vt.height, vt.width
    pts = vt.origin.reshape(1, 3) + depth.unsqueeze(1) * vt.dirs
    pts = pts.reshape(H, W, 3)
    du = pts[1:-1, 2:] - pts[1:-1, :-2]
    dv = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n = torch.cross(du, dv, dim=-1)
    norm = n.norm(dim=-1, keepdim=True)
    n = n / norm.clamp(min=1e-12)
    dirs_in = vt.dirs.reshape(H, W, 3)[1:-1, 1:-1]
    sign = torch.where((n * dirs_in).sum(-1, keepdim=True) > 0, -1.0, 1.0)
    n = n * sign
    full = torch.zeros(H, W, 3, dtype=depth.dtype)
    full[1:-1, 1:-1] = n
    acc_ok = (accumulation.reshape(H, W) >= accum_threshold)
    valid = torch.zeros(H, W, dtype=torch.bool)
    valid[1:-1, 1:-1] = (norm[:, :, 0] > 1e-12) & acc_ok[1:-1, 1:-1] \
        & acc_ok[1:-1, 2:] & acc_ok[1:-1, :-2] & acc_ok[2:, 1:-1] & acc_ok[:-2, 1:-1]
    return full.reshape(-1, 3), valid.reshape(-1)
