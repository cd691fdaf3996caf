"""Configuration dataclasses for rendering, field evaluation, extraction and fitting."""

from dataclasses import dataclass, field, fields


@dataclass
class SceneConfig:
    """Numeric knobs shared by the renderer, the opacity field and the mesher.

    Defaults follow the reference settings: meshes are extracted at the 0.5
    level set with 8 rounds of binary search, Gaussians with activated alpha
    below 0.05 are pruned before grid generation, and bounding boxes extend
    3 sigma in each local axis.
    """

    level: float = 0.5              # level-set value L in (0, 1)
    binary_steps: int = 8           # bisection rounds N (0 = plain linear interp)
    near_clip: float = 0.2          # contributions with t* below this are culled
    prune_alpha: float = 0.05       # alpha threshold for grid generation
    contrib_cutoff: float = 1.0 / 255.0   # minimum alpha*E kept during gather
    min_transmittance: float = 1e-4       # early-stop floor for compositing
    box_sigma: float = 3.0          # bounding-box extent multiplier k
    alpha_distortion: float = 1000.0      # depth-distortion loss weight
    beta_normal: float = 0.05       # normal-consistency loss weight

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if self.binary_steps < 0:
            raise ValueError("binary_steps must be >= 0")
        for name in ("near_clip", "prune_alpha", "contrib_cutoff",
                     "min_transmittance", "box_sigma"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def replace(self, **kw) -> "SceneConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return SceneConfig(**d)


@dataclass
class FitConfig:
    """Optimizer hyperparameters (3DGS-convention per-parameter learning rates).

    Position learning rate decays exponentially from ``lr_position_init`` to
    ``lr_position_final`` (both scaled by the scene extent) over
    ``position_lr_max_steps``; all other rates are constant.
    """

    iterations: int = 1000
    lr_position_init: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    position_lr_max_steps: int = 1000
    lr_sh_dc: float = 2.5e-3
    lr_sh_rest: float = 2.5e-3 / 20.0
    lr_opacity: float = 0.05
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lambda_dssim: float = 0.2       # photometric mix: (1-l)*L1 + l*(1-SSIM)
    detach_depth_normal: bool = False   # detach N (depth-gradient normal) in the normal loss

    densify_interval: int = 100
    densify_from: int = 200
    densify_until: int = 500        # no densification after this iteration
    densify_grad_threshold: float = 8e-5
    percent_dense: float = 0.01     # clone/split decision: max scale vs extent
    split_scale_factor: float = 1.6
    split_count: int = 2
    prune_alpha: float = 0.05

    seed: int = 0
