"""Embedded oracle suites for the `check` subcommand.

Each suite verifies an invariant against an independent oracle (dense
sampling, exact predicates, naive loops, finite differences) on built-in
fixtures. ``faults`` injects deliberate bugs for self-tests of the harness,
e.g. "tstar-sign" flips the sign of the closed-form intersection depth and
must make the intersect suite fail.
"""

import time
from dataclasses import dataclass
from typing import FrozenSet, List

import numpy as np

from . import core
from .config import FitConfig, SceneConfig
from .delaunay import audit_empty_circumsphere, delaunay
from .field import batch_evaluate, batch_evaluate_naive
from .fixtures import random_scene, surrounding_views
from .optimize import DensifyStats, accumulate_densify
from .scene import look_at_camera, quat_to_rotmat


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_gaussian(rng, scale_range=(-1.5, 0.5)):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return (rng.normal(size=3), np.exp(rng.uniform(*scale_range, size=3)), q)


def check_intersect(rng, faults) -> CheckResult:
    """Closed-form t* and peak against dense sampling of the covariance form.

    The dense grid (spacing 1e-3) bounds the peak only to curvature*dt^2/8,
    so the fixture keeps scales above e^-0.9 to make 1e-6 attainable.
    """
    t0 = time.time()
    n_cases = 100
    worst_t, worst_peak = 0.0, 0.0
    ts = np.linspace(0.0, 20.0, 20001)
    for _ in range(n_cases):
        center, scale, quat = _random_gaussian(rng, scale_range=(-0.9, 0.5))
        center = center + np.array([0.0, 0.0, 8.0])
        o = rng.normal(size=3)
        r = center - o + rng.normal(size=3) * 0.5
        r /= np.linalg.norm(r)
        rl = core.to_local(center, scale, quat, o, r)
        t_star, peak = core.intersect(rl)
        if "tstar-sign" in faults:
            t_star = -t_star
        dense = np.exp(-0.5 * ((rl.A * ts + 2 * rl.B) * ts + rl.C))
        i = int(np.argmax(dense))
        worst_t = max(worst_t, abs(t_star - ts[i]))
        worst_peak = max(worst_peak, abs(peak - dense[i]))
    ok = worst_t <= 1e-3 + 1e-12 and worst_peak <= 1e-6
    return CheckResult("intersect", ok,
                       f"max |t*-argmax|={worst_t:.2e}, max peak err={worst_peak:.2e}",
                       time.time() - t0)


def check_plane_normal(rng, faults) -> CheckResult:
    """In-plane world directions R^T S u (u perpendicular to r_g) are orthogonal to n."""
    t0 = time.time()
    worst = 0.0
    for _ in range(200):
        center, scale, quat = _random_gaussian(rng)
        o = rng.normal(size=3) * 2.0
        r = rng.normal(size=3)
        rl = core.to_local(center, scale, quat, o, r)
        n = core.plane_normal(scale, quat, rl, r_world=r)
        u = rng.normal(size=3)
        u -= (u @ rl.r_g) / (rl.r_g @ rl.r_g) * rl.r_g     # u . r_g = 0
        world = quat_to_rotmat(quat) @ (scale * u)
        norm = np.linalg.norm(world)
        if norm > 1e-12:
            worst = max(worst, abs(n @ world) / norm)
    ok = worst < 1e-6
    return CheckResult("plane-normal", ok, f"max |n . R^T S u|={worst:.2e}",
                       time.time() - t0)


def check_delaunay(rng, faults) -> CheckResult:
    """Empty-circumsphere audits on random and structured instances."""
    t0 = time.time()
    total = 0
    for n, kind in ((120, "normal"), (250, "normal"), (64, "grid")):
        if kind == "grid":
            g = np.stack(np.meshgrid(*[np.arange(4.0)] * 3), -1).reshape(-1, 3)
            pts = g
        else:
            pts = rng.normal(size=(n, 3))
        tets = delaunay(pts)
        total += audit_empty_circumsphere(pts, tets)
    ok = total == 0
    return CheckResult("delaunay", ok, f"{total} circumsphere violations",
                       time.time() - t0)


def check_field_batch(rng, faults) -> CheckResult:
    """Tile-grouped field evaluation equals the naive per-point loop bit-for-bit."""
    t0 = time.time()
    scene = random_scene(60, rng)
    views = [look_at_camera(eye, (0, 0, 0), width=64, height=64, fov_deg=45,
                            view_id=i)
             for i, eye in enumerate([(4, 0, 0), (0, 4, 0.5)])]
    pts = rng.normal(size=(1000, 3)) * 1.5
    cfg = SceneConfig()
    exact = True
    for v in views:
        a, va = batch_evaluate(scene, v, pts, cfg)
        b, vb = batch_evaluate_naive(scene, v, pts, cfg)
        exact &= np.array_equal(a, b) and np.array_equal(va, vb)
    return CheckResult("field-batch", exact,
                       "batched == naive (bit-for-bit)" if exact else "MISMATCH",
                       time.time() - t0)


def check_gradients(rng, faults) -> CheckResult:
    """Autograd vs central finite differences on a small fixture."""
    import torch

    from .diff_render import ViewTensors, render_forward, splats_from_scene
    from .losses import loss_distortion
    from .optimize import compute_losses

    t0 = time.time()
    scene = random_scene(5, rng, spread=0.5, scale_range=(-1.5, -0.5),
                         alpha_range=(0.3, 0.9))
    view = look_at_camera((0, -4, 0), (0, 0, 0), width=10, height=10, fov_deg=40)
    ref = torch.tensor(rng.uniform(size=(10, 10, 3)))
    cfg = SceneConfig(alpha_distortion=0.0, beta_normal=0.05)
    fc = FitConfig()

    def total(splats):
        vt = ViewTensors.from_view(view, dtype=torch.float64)
        res = render_forward(splats, vt, cfg.near_clip)
        return compute_losses(res, ref, vt, cfg, fc).total

    splats = splats_from_scene(scene, dtype=torch.float64)
    total(splats).backward()
    worst = 0.0
    h = 1e-6
    for pi, p in enumerate(splats.parameters()):
        flat = p.detach().reshape(-1)
        for i in rng.choice(flat.numel(), size=3, replace=False):
            vals = []
            for sign in (+1.0, -1.0):
                s = splats_from_scene(scene, dtype=torch.float64)
                with torch.no_grad():
                    s.parameters()[pi].reshape(-1)[i] += sign * h
                vals.append(float(total(s).detach()))
            fd = (vals[0] - vals[1]) / (2 * h)
            an = float(p.grad.reshape(-1)[i])
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-7))
    # distortion detachment: no gradient path from weights
    w = torch.rand(4, 6, dtype=torch.float64, requires_grad=True)
    t = torch.sort(torch.rand(4, 6, dtype=torch.float64), dim=1).values
    t.requires_grad_(True)
    loss_distortion(w, t).backward()
    detached = w.grad is None
    ok = worst < 1e-3 and detached
    return CheckResult("gradients", ok,
                       f"max rel err={worst:.2e}, distortion detached={detached}",
                       time.time() - t0)


def check_densify_metric(rng, faults) -> CheckResult:
    """Cancellation fixture and the triangle inequality for the metric."""
    t0 = time.time()
    g = rng.normal(size=2)
    stats = DensifyStats.zeros(1)
    grads = np.stack([g, -g])[:, None, :]              # two pixels, one Gaussian
    accumulate_densify(stats, grads)
    cancel_ok = np.isclose(stats.classic_sum[0], 0.0) \
        and np.isclose(stats.norm_sum[0], 2 * np.linalg.norm(g))
    stats2 = DensifyStats.zeros(8)
    ok_tri = True
    for _ in range(5):
        pg = rng.normal(size=(30, 8, 2))
        accumulate_densify(stats2, pg)
    ok_tri = np.all(stats2.norm_sum >= stats2.classic_sum - 1e-12)
    ok = bool(cancel_ok and ok_tri)
    return CheckResult("densify-metric", ok,
                       f"cancellation={'ok' if cancel_ok else 'FAIL'}, "
                       f"triangle={'ok' if ok_tri else 'FAIL'}",
                       time.time() - t0)


_SUITES = (check_intersect, check_plane_normal, check_delaunay,
           check_field_batch, check_gradients, check_densify_metric)


def run_checks(faults: FrozenSet[str] = frozenset(), seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    return [suite(rng, faults) for suite in _SUITES]
