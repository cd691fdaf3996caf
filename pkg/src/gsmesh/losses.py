"""Training losses: photometric (L1 + D-SSIM), depth distortion, normal consistency.

The distortion loss treats blend weights as constants (their gradient is
detached) so only the intersection depths receive a pull; this keeps the
loss from shrinking weights and inflating the first-blended Gaussians.
"""

from dataclasses import dataclass

import torch


@dataclass
class LossBundle:
    photometric: torch.Tensor
    distortion: torch.Tensor
    normal: torch.Tensor
    total: torch.Tensor


def _gaussian_window(size: int = 11, sigma: float = 1.5, dtype=torch.float32):
    x = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(x * x) / (2.0 * sigma * sigma))
    g = g / g.sum()
    w = torch.outer(g, g)
    return w.reshape(1, 1, size, size)


def ssim(img1: torch.Tensor, img2: torch.Tensor, window_size: int = 11,
         sigma: float = 1.5) -> torch.Tensor:
    """Single-scale SSIM for (H, W, C) images in [0, 1], Gaussian window."""
    C = img1.shape[-1]
    w = _gaussian_window(window_size, sigma, img1.dtype).expand(C, 1, -1, -1)
    pad = window_size // 2
    a = img1.permute(2, 0, 1).unsqueeze(0)
    b = img2.permute(2, 0, 1).unsqueeze(0)
    conv = lambda x: torch.nn.functional.conv2d(x, w, padding=pad, groups=C)
    mu1, mu2 = conv(a), conv(b)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    sigma1 = conv(a * a) - mu1_sq
    sigma2 = conv(b * b) - mu2_sq
    sigma12 = conv(a * b) - mu12
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    s = ((2 * mu12 + c1) * (2 * sigma12 + c2)) \
        / ((mu1_sq + mu2_sq + c1) * (sigma1 + sigma2 + c2))
    return s.mean()


def loss_photometric(rendered: torch.Tensor, reference: torch.Tensor,
                     lambda_dssim: float = 0.2) -> torch.Tensor:
    """(1 - l) * L1 + l * (1 - SSIM) on (H, W, 3) images."""
    if rendered.shape != reference.shape:
        raise ValueError("image shape mismatch")
    l1 = (rendered - reference).abs().mean()
    return (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - ssim(rendered, reference))


def loss_distortion(weights: torch.Tensor, tvals: torch.Tensor) -> torch.Tensor:
    """Pairwise weighted depth spread sum_{i,j} w_i w_j |t_i - t_j| per ray.

    weights, tvals: (P, K) sorted ascending by t along dim 1. The weights are
    detached; gradients flow only into the depths. Evaluated with exclusive
    prefix sums (O(K) per ray, both ordered pairs counted). Returns the mean
    over rays.
    """
    w = weights.detach()
    wt = w * tvals
    cum_w = torch.cumsum(w, dim=1) - w        # exclusive prefix sums
    cum_wt = torch.cumsum(wt, dim=1) - wt
    per_ray = 2.0 * (w * (tvals * cum_w - cum_wt)).sum(dim=1)
    return per_ray.mean()


def loss_normal(weights: torch.Tensor, dots: torch.Tensor,
                valid: torch.Tensor) -> torch.Tensor:
    """Weighted misalignment sum_i w_i (1 - n_i . N) over valid pixels.

    weights: (P, K) blend weights (any per-ray order, the sum is order
    invariant); dots: (P, K) per-sample alignment n_i . N; valid: (P,) mask
    of usable depth-gradient pixels. Returns the mean over valid pixels
    (zero when none are valid).
    """
    if not valid.any():
        return weights.sum() * 0.0
    per_pixel = (weights * (1.0 - dots)).sum(dim=1)
    return per_pixel[valid].mean()


def normal_dots_dense(normals: torch.Tensor, depth_normals: torch.Tensor):
    """Reference dots for loss_normal from explicit (P, K, 3) normals."""
    return (normals * depth_normals.unsqueeze(1)).sum(-1)
